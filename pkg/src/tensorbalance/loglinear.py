"""Log-linear model on a poset: dual coordinates, potentials, and geometry.

A strictly positive probability vector ``p`` over a poset has two coordinate
systems. The natural parameters are the Moebius inversion of ``log p``,

    theta(x) = sum_s mu(s, x) log p(s),

and the expectation parameters are the up-set masses,

    eta(x) = sum_{s >= x} p(s).

Both determine ``p`` uniquely; the transforms here are exact inverses of each
other up to floating point. The convex potentials ``psi`` (log-normalizer)
and ``phi`` (negative entropy) are Legendre duals, and their Hessians give a
Riemannian metric and connection in closed form.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .exceptions import NonPositiveEntry, NonPositiveResult, OverflowRisk, SizeCap

#: |sum(p) - 1| tolerated when wrapping a vector as a Distribution.
NORMALIZATION_TOL = 1e-12

#: Log-domain prefix sums above this raise OverflowRisk before exp().
LOG_DOMAIN_BOUND = 700.0

#: Dense rank-3 connection arrays are refused above this many entries.
CONNECTION_BUDGET = 2 ** 24


@dataclass(frozen=True)
class Distribution:
    """Strictly positive probability vector over the poset elements."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        object.__setattr__(self, "p", p)
        if p.ndim != 1:
            raise ValueError("p must be a vector")
        if not (p > 0).all():
            raise NonPositiveEntry("probabilities must be strictly positive")
        if abs(p.sum() - 1.0) > NORMALIZATION_TOL:
            raise ValueError("probabilities sum to %.17g, not 1" % p.sum())

    @classmethod
    def from_weights(cls, weights):
        """Normalize a positive weight vector into a Distribution."""
        w = np.asarray(weights, dtype=float)
        if not (w > 0).all():
            raise NonPositiveEntry("weights must be strictly positive")
        return cls(w / w.sum())

    def __len__(self):
        return len(self.p)


@dataclass(frozen=True)
class CoordinateVector:
    """theta- or eta-coordinates indexed by all poset elements."""

    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in ("theta", "eta"):
            raise ValueError("kind must be 'theta' or 'eta'")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))


def theta_from_p(poset, dist):
    """Natural parameters ``theta(x) = sum_s mu(s, x) log p(s)``."""
    _check_len(poset, dist.p)
    logp = np.log(dist.p)
    return CoordinateVector("theta", poset.mobius.T @ logp)


def eta_from_p(poset, dist):
    """Expectation parameters ``eta(x) = sum_{s >= x} p(s)``."""
    _check_len(poset, dist.p)
    return CoordinateVector("eta", poset.zeta @ dist.p)


def p_from_theta(poset, theta, log_bound=LOG_DOMAIN_BOUND, return_shift=False):
    """Distribution with ``log p(x) = sum_{s <= x} theta(s)``.

    If the supplied ``theta(bottom)`` does not normalize ``p``, the result is
    normalized anyway and the applied log-domain shift is reported through
    ``return_shift`` (zero for a consistent theta).
    """
    _check_len(poset, theta.values)
    log_tilde = poset.zeta.T @ theta.values
    if log_tilde.max() > log_bound:
        raise OverflowRisk(
            "log-domain prefix sum %.3g exceeds bound %.3g"
            % (log_tilde.max(), log_bound))
    shift = logsumexp(log_tilde)
    dist = Distribution(np.exp(log_tilde - shift))
    return (dist, float(shift)) if return_shift else dist


def p_from_eta(poset, eta):
    """Distribution recovered by Moebius inversion, ``p = mu @ eta``.

    Raises
    ------
    NonPositiveResult
        If ``eta`` lies outside the feasible polytope, so some
        reconstructed entry is <= 0.
    """
    _check_len(poset, eta.values)
    if abs(eta.values[poset.bottom] - 1.0) > NORMALIZATION_TOL:
        raise ValueError("eta(bottom) must equal 1")
    p = poset.mobius @ eta.values
    if not (p > 0).all():
        x = int(np.flatnonzero(p <= 0)[0])
        raise NonPositiveResult(
            "reconstructed p(%r) = %.6g <= 0" % (poset.elements[x], p[x]))
    # sums to eta(bottom) = 1 exactly up to rounding
    return Distribution(p / p.sum())


def psi(poset, theta):
    """Log-normalizer ``psi(theta) = -theta(bottom) = -log p(bottom)``."""
    return -float(theta.values[poset.bottom])


def phi(poset, dist):
    """Negative entropy ``phi(eta) = sum_x p(x) log p(x)``."""
    _check_len(poset, dist.p)
    return float(dist.p @ np.log(dist.p))


def kl_divergence(poset, dist_p, dist_q):
    """Bregman divergence ``D[P, Q] = sum_x q(x) log(q(x) / p(x))``.

    Nonnegative, zero iff the distributions coincide, and asymmetric in
    general. Note the convention: this is the KL divergence from Q to P.
    """
    _check_len(poset, dist_p.p)
    _check_len(poset, dist_q.p)
    q = dist_q.p
    return float(q @ (np.log(q) - np.log(dist_p.p)))


def nonbottom_indices(poset):
    """Indices of the elements above bottom, in ascending order."""
    return np.array([i for i in range(poset.size) if i != poset.bottom])


def metric(poset, dist, coord="theta", indices=None):
    """Riemannian metric as a dense symmetric matrix over the chosen indices.

    With ``coord='theta'`` the entry at (x, y) is

        sum_s zeta(x, s) zeta(y, s) p(s) - eta(x) eta(y),

    which is also the Jacobian d eta / d theta and the Fisher information;
    with ``coord='eta'`` it is ``sum_s mu(s, x) mu(s, y) / p(s)``. The two
    matrices over the full index set are inverse to each other.

    Parameters
    ----------
    indices : array of indices within S+, optional
        Principal submatrix to compute (defaults to all of S+).
    """
    _check_len(poset, dist.p)
    if indices is None:
        indices = nonbottom_indices(poset)
    else:
        indices = np.asarray(indices, dtype=int)
        if poset.bottom in indices:
            raise ValueError("metric indices must lie in S+ (exclude bottom)")
    p = dist.p
    if coord == "theta":
        up = np.asarray(poset.zeta[indices].todense(), dtype=float)
        eta = up @ p
        return (up * p) @ up.T - np.outer(eta, eta)
    if coord == "eta":
        down = np.asarray(poset.mobius[:, indices].todense(), dtype=float)
        return down.T @ (down / p[:, None])
    raise ValueError("coord must be 'theta' or 'eta'")


def connection(poset, dist, coord="theta", indices=None,
               budget=CONNECTION_BUDGET):
    """Riemannian (Levi-Civita) connection as a rank-3 symmetric array.

    Closed forms:

        Gamma_xyz(theta) =  1/2 sum_s prod_{w in xyz} (zeta(w, s) - eta(w)) p(s)
        Gamma_xyz(eta)   = -1/2 sum_s mu(s, x) mu(s, y) mu(s, z) p(s)^-2

    Raises
    ------
    SizeCap
        If the dense output would exceed ``budget`` entries.
    """
    _check_len(poset, dist.p)
    if indices is None:
        indices = nonbottom_indices(poset)
    else:
        indices = np.asarray(indices, dtype=int)
    if len(indices) ** 3 > budget:
        raise SizeCap("connection would need %d entries (budget %d)"
                      % (len(indices) ** 3, budget))
    p = dist.p
    if coord == "theta":
        up = np.asarray(poset.zeta[indices].todense(), dtype=float)
        centered = up - (up @ p)[:, None]
        return 0.5 * np.einsum("xs,ys,zs,s->xyz", centered, centered,
                               centered, p)
    if coord == "eta":
        down = np.asarray(poset.mobius[:, indices].todense(), dtype=float).T
        return -0.5 * np.einsum("xs,ys,zs,s->xyz", down, down, down,
                                p ** -2.0)
    raise ValueError("coord must be 'theta' or 'eta'")


def _check_len(poset, vec):
    if len(vec) != poset.size:
        raise ValueError("vector length %d does not match poset size %d"
                         % (len(vec), poset.size))
