"""Newton projection of a distribution onto coordinate-fixing submanifolds.

A constraint set ``beta`` fixes theta-coordinates (m-kind) or
eta-coordinates (e-kind) on a subset ``dom`` of elements. Projection finds
the unique distribution meeting the constraints while the dual coordinates
stay exactly at their starting values off ``dom``; it minimizes the
divergence to the start, and each Newton step solves a dense
``|dom| x |dom|`` linear system whose matrix is a closed-form Jacobian.

For the e-kind the solved system follows the published update: the bottom
element is part of ``dom`` (target 1) and the Jacobian is

    J[x, y] = sum_s zeta(x, s) zeta(y, s) p(s) - |S| eta(x) eta(y),

after which theta(bottom) is renormalized. Taking the Schur complement of
the bottom row/column shows this step equals an exact Newton step with the
Riemannian metric on ``dom \\ {bottom}``; the |S| factor only keeps the
bordered system nonsingular (with factor 1 it would be exactly singular).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import NonPositiveResult, SingularJacobian
from .loglinear import (CoordinateVector, Distribution, eta_from_p,
                        kl_divergence, theta_from_p)


@dataclass(frozen=True)
class ConstraintSet:
    """Constrained element indices and target values.

    ``kind`` is ``"e"`` (targets are eta values; bottom must belong to
    ``dom`` with target 1) or ``"m"`` (targets are theta values; ``dom``
    lies in S+).
    """

    kind: str
    dom: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        dom = np.asarray(self.dom, dtype=int)
        target = np.asarray(self.target, dtype=float)
        object.__setattr__(self, "dom", dom)
        object.__setattr__(self, "target", target)
        if self.kind not in ("e", "m"):
            raise ValueError("kind must be 'e' or 'm'")
        if dom.shape != target.shape or dom.ndim != 1:
            raise ValueError("dom and target must be matching vectors")
        if len(np.unique(dom)) != len(dom):
            raise ValueError("dom indices must be distinct")

    @classmethod
    def for_eta(cls, poset, targets):
        """e-kind set from an {index: eta value} mapping; adds the bottom."""
        items = dict(targets)
        items.setdefault(poset.bottom, 1.0)
        if abs(items[poset.bottom] - 1.0) > 1e-12:
            raise ValueError("bottom target must be 1")
        dom = np.array(sorted(items), dtype=int)
        target = np.array([items[i] for i in dom], dtype=float)
        if ((target <= 0) | (target > 1)).any():
            raise ValueError("eta targets must lie in (0, 1]")
        _check_indices(poset, dom)
        return cls("e", dom, target)

    @classmethod
    def for_theta(cls, poset, targets):
        """m-kind set from an {index: theta value} mapping (bottom excluded)."""
        items = dict(targets)
        if poset.bottom in items:
            raise ValueError("theta constraints may not include the bottom")
        dom = np.array(sorted(items), dtype=int)
        target = np.array([items[i] for i in dom], dtype=float)
        _check_indices(poset, dom)
        return cls("m", dom, target)


@dataclass
class ProjectionOptions:
    """Iteration controls shared by both projections."""

    tol: float = 1e-6
    max_iter: int = 100
    step_control: str = "halving"  # "halving" | "off"
    max_halvings: int = 30
    record_trace: bool = True
    keep_iterates: bool = False

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.step_control not in ("halving", "off"):
            raise ValueError("step_control must be 'halving' or 'off'")


@dataclass
class ProjectionResult:
    """Outcome of a projection run.

    ``trace`` rows are ``(iteration, residual, kl_to_start)``, one per
    residual evaluation; ``iterations`` counts those evaluations, so an
    already-feasible start converges with ``iterations == 1``.
    """

    distribution: Distribution
    iterations: int
    trace: list
    converged: bool
    coordinates: CoordinateVector
    iterates: list = field(default_factory=list)


def e_project(poset, dist, constraints, options=None):
    """Project onto ``{eta(x) = beta(x) for x in dom}`` holding theta off dom.

    Each iteration solves the bordered Newton system above, adds the step
    to theta on ``dom``, renormalizes via
    ``theta(bottom) -= log sum_x p(x)`` and rebuilds ``p`` from prefix sums
    of theta. Step halving (on by default) halves the update while the
    constraint residual ``max |eta - beta|`` would increase, which keeps
    the residual monotone; an infeasible target therefore ends with
    ``converged=False`` after ``max_iter`` evaluations instead of
    diverging.
    """
    opts = options or ProjectionOptions()
    if constraints.kind != "e":
        raise ValueError("e_project requires an e-kind constraint set")
    dom = constraints.dom
    beta = constraints.target
    bot_pos = np.flatnonzero(dom == poset.bottom)
    if len(bot_pos) != 1 or abs(beta[bot_pos[0]] - 1.0) > 1e-12:
        raise ValueError("e-kind dom must contain the bottom with target 1")

    zeta = poset.zeta.astype(float).tocsr()
    zeta_dom = zeta[dom]
    size = poset.size
    theta = theta_from_p(poset, dist).values.copy()
    p = dist.p.copy()

    def eval_state(p_vec):
        return np.asarray(zeta_dom @ p_vec)

    trace, iterates = [], []
    converged = False
    best = (math.inf, p, theta)
    iterations = 0
    for it in range(1, opts.max_iter + 1):
        iterations = it
        eta_dom = eval_state(p)
        res = float(np.abs(eta_dom - beta).max())
        if opts.record_trace:
            trace.append((it, res, kl_divergence(poset, dist, Distribution(p))))
        if opts.keep_iterates:
            iterates.append(p.copy())
        if res < best[0]:
            best = (res, p, theta)
        if res <= opts.tol:
            converged = True
            break
        gram = np.asarray((zeta_dom.multiply(p) @ zeta_dom.T).todense())
        jac = gram - size * np.outer(eta_dom, eta_dom)
        delta = -_solve(jac, eta_dom - beta)
        accepted = False
        step = 1.0
        for _ in range(opts.max_halvings + 1):
            theta_new = theta.copy()
            theta_new[dom] += step * delta
            log_tilde = np.asarray(zeta.T @ theta_new)
            shift = _logsumexp(log_tilde)
            p_new = np.exp(log_tilde - shift)
            theta_new[poset.bottom] -= shift
            ok = np.isfinite(p_new).all() and (p_new > 0).all()
            if ok:
                res_new = float(np.abs(eval_state(p_new) - beta).max())
                if opts.step_control == "off" or res_new <= res:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            break
        theta, p = theta_new, p_new
    _, p, theta = best if not converged else (None, p, theta)
    return ProjectionResult(
        distribution=Distribution(p),
        iterations=iterations,
        trace=trace,
        converged=converged,
        coordinates=CoordinateVector("theta", theta),
        iterates=iterates,
    )


def m_project(poset, dist, constraints, options=None):
    """Project onto ``{theta(x) = beta(x) for x in dom}`` holding eta off dom.

    Iterates on the eta vector: solve with the Jacobian
    ``J[x, y] = sum_s mu(s, x) mu(s, y) / p(s)``, update eta on ``dom``,
    and rebuild ``p`` by Moebius inversion. Steps are halved whenever the
    rebuilt ``p`` leaves the positive orthant or the residual
    ``max |theta - beta|`` would grow.

    Raises
    ------
    NonPositiveResult
        If ``p`` stays infeasible even at the maximal halving depth.
    """
    opts = options or ProjectionOptions()
    if constraints.kind != "m":
        raise ValueError("m_project requires an m-kind constraint set")
    dom = constraints.dom
    beta = constraints.target
    if poset.bottom in dom:
        raise ValueError("m-kind dom must lie in S+")
    if len(dom) == 0:
        return ProjectionResult(
            distribution=dist, iterations=0, trace=[], converged=True,
            coordinates=eta_from_p(poset, dist))

    mob = poset.mobius.astype(float).tocsr()
    down_dom = np.asarray(mob[:, dom].todense())  # mu(s, x) for x in dom
    eta = eta_from_p(poset, dist).values.copy()
    p = dist.p.copy()

    trace, iterates = [], []
    converged = False
    best = (math.inf, p, eta)
    iterations = 0
    for it in range(1, opts.max_iter + 1):
        iterations = it
        theta_dom = down_dom.T @ np.log(p)
        res = float(np.abs(theta_dom - beta).max())
        if opts.record_trace:
            trace.append((it, res, kl_divergence(poset, dist, Distribution(p))))
        if opts.keep_iterates:
            iterates.append(p.copy())
        if res < best[0]:
            best = (res, p, eta)
        if res <= opts.tol:
            converged = True
            break
        jac = down_dom.T @ (down_dom / p[:, None])
        delta = -_solve(jac, theta_dom - beta)
        accepted = False
        feasible_seen = False
        step = 1.0
        for _ in range(opts.max_halvings + 1):
            eta_new = eta.copy()
            eta_new[dom] += step * delta
            p_new = np.asarray(mob @ eta_new)
            if (p_new > 0).all():
                feasible_seen = True
                res_new = float(np.abs(down_dom.T @ np.log(p_new) - beta).max())
                if opts.step_control == "off" or res_new <= res:
                    accepted = True
                    break
            elif opts.step_control == "off":
                break
            step *= 0.5
        if not accepted:
            if not feasible_seen:
                raise NonPositiveResult(
                    "reconstructed p infeasible at every halving depth")
            break
        eta, p = eta_new, p_new / p_new.sum()
    _, p, eta = best if not converged else (None, p, eta)
    return ProjectionResult(
        distribution=Distribution(p),
        iterations=iterations,
        trace=trace,
        converged=converged,
        coordinates=CoordinateVector("eta", eta),
        iterates=iterates,
    )


def pythagorean_check(poset, dist_p, dist_proj, dist_q, kind):
    """Defect of the Pythagorean identity; a test oracle.

    With ``D[A, B] = sum_x b(x) log(b(x)/a(x))`` the identity that holds
    exactly is, for the e-kind (``dist_q`` satisfying the eta constraints),

        D[P, Q] = D[P, P_beta] + D[P_beta, Q],

    and for the m-kind the arguments swap:

        D[Q, P] = D[P_beta, P] + D[Q, P_beta].

    Returns the absolute defect of the applicable identity.
    """
    div = kl_divergence
    if kind == "e":
        gap = (div(poset, dist_p, dist_q)
               - div(poset, dist_p, dist_proj)
               - div(poset, dist_proj, dist_q))
    elif kind == "m":
        gap = (div(poset, dist_q, dist_p)
               - div(poset, dist_proj, dist_p)
               - div(poset, dist_q, dist_proj))
    else:
        raise ValueError("kind must be 'e' or 'm'")
    return abs(gap)


def _solve(jac, rhs):
    if not np.isfinite(jac).all():
        raise SingularJacobian("Jacobian contains non-finite entries")
    try:
        return np.linalg.solve(jac, rhs)
    except np.linalg.LinAlgError as exc:
        cond = float(np.linalg.cond(jac)) if np.isfinite(jac).all() else math.inf
        raise SingularJacobian(
            "linear solve failed (condition estimate %.3g)" % cond,
            condition=cond) from exc


def _logsumexp(values):
    m = values.max()
    return m + math.log(np.exp(values - m).sum())


def _check_indices(poset, dom):
    if len(dom) and (dom.min() < 0 or dom.max() >= poset.size):
        raise ValueError("constraint indices out of range")
