"""Finite posets with a least element, their zeta and Moebius functions.

Elements are addressed by 0-based integer indices; ``elements`` keeps the
caller's labels for reporting (grid posets label elements with 1-based
multi-index tuples). The zeta function is the 0/1 indicator of the order
relation and the Moebius function is its inverse in the incidence algebra,
computed in exact integer arithmetic.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .exceptions import NoBottom, NotAPartialOrder

#: Exhaustive transitivity checking is cubic; above this size we sample.
DEFAULT_VALIDATION_CAP = 4096


class Poset:
    """A finite partially ordered set with a least element.

    Parameters
    ----------
    leq_matrix : (n, n) bool array
        ``leq_matrix[s, x]`` is True iff ``s <= x``.
    elements : sequence, optional
        Opaque labels, one per element. Defaults to ``range(n)``.
    """

    def __init__(self, leq_matrix, elements=None, _validated=False):
        leq_matrix = np.asarray(leq_matrix, dtype=bool)
        if leq_matrix.ndim != 2 or leq_matrix.shape[0] != leq_matrix.shape[1]:
            raise ValueError("leq_matrix must be square")
        self.leq_matrix = leq_matrix
        self.size = leq_matrix.shape[0]
        if elements is None:
            elements = tuple(range(self.size))
        else:
            elements = tuple(elements)
            if len(elements) != self.size:
                raise ValueError("number of labels does not match matrix size")
        self.elements = elements
        if not _validated:
            _validate_order(self.leq_matrix, self.elements)
        self.bottom = _find_bottom(self.leq_matrix, self.elements)

    def leq(self, s, x):
        """Whether element ``s`` precedes element ``x``."""
        return bool(self.leq_matrix[s, x])

    @cached_property
    def topo_order(self):
        """Indices in a linear extension (bottom first)."""
        return np.argsort(self.leq_matrix.sum(axis=1), kind="stable")[::-1]

    @cached_property
    def zeta(self):
        return zeta_matrix(self)

    @cached_property
    def mobius(self):
        return mobius_matrix(self)

    @cached_property
    def incidence(self):
        return IncidencePair(zeta=self.zeta, mobius=self.mobius)

    def __repr__(self):
        return "%s(size=%d, bottom=%r)" % (
            type(self).__name__, self.size, self.elements[self.bottom])


class GridPoset(Poset):
    """Subset of the grid [n1] x ... x [nN] under the componentwise order.

    ``index_array`` holds the 1-based multi-indices of the members, one row
    per element, in row-major order. The order relation is evaluated by
    componentwise comparison, so construction never touches all pairs.
    """

    def __init__(self, shape, index_array):
        index_array = np.asarray(index_array, dtype=np.int64)
        if index_array.ndim != 2 or index_array.shape[1] != len(shape):
            raise ValueError("index_array must be (size, len(shape))")
        if index_array.size and (index_array.min() < 1
                                 or (index_array > np.asarray(shape)).any()):
            raise ValueError("multi-indices out of range for shape")
        order = np.lexsort(index_array.T[::-1])
        self.shape = tuple(int(n) for n in shape)
        self.index_array = index_array[order]
        labels = [tuple(int(i) for i in row) for row in self.index_array]
        n = len(labels)
        # componentwise comparison, vectorized over all pairs
        leq = np.ones((n, n), dtype=bool)
        for c in range(index_array.shape[1]):
            col = self.index_array[:, c]
            leq &= col[:, None] <= col[None, :]
        super().__init__(leq, labels, _validated=True)

    @property
    def is_full(self):
        return self.size == int(np.prod(self.shape))


@dataclass(frozen=True)
class IncidencePair:
    """Sparse zeta and Moebius matrices of a poset.

    Both are (size, size) integer matrices with ``zeta[s, x] = 1`` iff
    ``s <= x`` and ``zeta @ mobius == mobius @ zeta == I`` exactly.
    """

    zeta: sp.csr_matrix
    mobius: sp.csr_matrix


def build_poset(labels, leq, validation_cap=DEFAULT_VALIDATION_CAP, seed=0):
    """Construct a validated :class:`Poset` from labels and a predicate.

    Parameters
    ----------
    labels : sequence
        Nonempty element labels.
    leq : callable
        Binary predicate on labels implementing the intended order.
    validation_cap : int
        Transitivity is verified exhaustively up to this size and by
        random sampling above it.
    seed : int
        Seed for the sampled checks.

    Raises
    ------
    NotAPartialOrder
        If an order axiom fails, with a witness pair in the message.
    NoBottom
        If no label precedes all others.
    """
    labels = list(labels)
    if not labels:
        raise ValueError("labels must be nonempty")
    n = len(labels)
    mat = np.empty((n, n), dtype=bool)
    for i, a in enumerate(labels):
        mat[i] = [bool(leq(a, b)) for b in labels]
    _validate_order(mat, labels, cap=validation_cap, seed=seed)
    return Poset(mat, labels, _validated=True)


def grid_poset(shape):
    """The full grid poset over ``[n1] x ... x [nN]``, row-major order."""
    shape = tuple(int(n) for n in shape)
    idx = np.indices(shape).reshape(len(shape), -1).T + 1
    return GridPoset(shape, idx)


def support_poset(shape, index_array):
    """Grid subposet spanned by the given 1-based multi-indices."""
    return GridPoset(shape, index_array)


def zeta_matrix(poset):
    """Sparse 0/1 incidence matrix with entry ``(s, x) = 1`` iff ``s <= x``."""
    return sp.csr_matrix(sp.coo_matrix(poset.leq_matrix.astype(np.int64)))


def mobius_matrix(poset):
    """Moebius function as a sparse integer matrix.

    Defined by ``mu(x, x) = 1`` and ``mu(x, y) = -sum_{x <= s < y} mu(x, s)``
    for ``x < y``, zero otherwise; full grids use the product of per-axis
    chain values, everything else the recursion in topological order.
    """
    if isinstance(poset, GridPoset) and poset.is_full:
        acc = sp.identity(1, dtype=np.int64, format="csr")
        for n in poset.shape:
            acc = sp.kron(acc, _chain_mobius(n), format="csr")
        return acc
    return _mobius_by_recursion(poset)


def _chain_mobius(n):
    diag = np.ones(n, dtype=np.int64)
    upper = -np.ones(n - 1, dtype=np.int64)
    return sp.diags([diag, upper], [0, 1], format="csr", dtype=np.int64)


def _mobius_by_recursion(poset):
    leq = poset.leq_matrix
    rank = np.empty(poset.size, dtype=np.int64)
    rank[poset.topo_order] = np.arange(poset.size)
    rows, cols, vals = [], [], []
    for x in range(poset.size):
        up = np.flatnonzero(leq[x])
        up = up[np.argsort(rank[up], kind="stable")]
        mu = np.zeros(len(up), dtype=np.int64)
        mu[0] = 1  # up[0] == x, the minimum of its own up-set
        for j in range(1, len(up)):
            below = leq[up[:j], up[j]]
            mu[j] = -mu[:j][below].sum()
        keep = mu != 0
        rows.extend([x] * int(keep.sum()))
        cols.extend(up[keep].tolist())
        vals.extend(mu[keep].tolist())
    return sp.csr_matrix(
        (np.array(vals, dtype=np.int64), (rows, cols)),
        shape=(poset.size, poset.size))


def _validate_order(mat, labels, cap=DEFAULT_VALIDATION_CAP, seed=0):
    n = mat.shape[0]
    diag = np.diagonal(mat)
    if not diag.all():
        i = int(np.flatnonzero(~diag)[0])
        raise NotAPartialOrder("reflexivity fails at %r" % (labels[i],))
    sym = mat & mat.T
    np.fill_diagonal(sym, False)
    if sym.any():
        i, j = map(int, np.argwhere(sym)[0])
        raise NotAPartialOrder(
            "antisymmetry fails for %r and %r" % (labels[i], labels[j]))
    if n <= cap:
        closure = (mat.astype(np.int64) @ mat.astype(np.int64)) > 0
        bad = closure & ~mat
        if bad.any():
            i, k = map(int, np.argwhere(bad)[0])
            j = int(np.flatnonzero(mat[i] & mat[:, k])[0])
            raise NotAPartialOrder(
                "transitivity fails: %r <= %r <= %r but not %r <= %r"
                % (labels[i], labels[j], labels[j], labels[i], labels[k]))
    else:
        rng = np.random.default_rng(seed)
        m = min(200_000, 10 * n)
        i = rng.integers(0, n, size=m)
        j = rng.integers(0, n, size=m)
        k = rng.integers(0, n, size=m)
        bad = mat[i, j] & mat[j, k] & ~mat[i, k]
        if bad.any():
            w = int(np.flatnonzero(bad)[0])
            raise NotAPartialOrder(
                "transitivity fails: %r <= %r <= %r but not %r <= %r"
                % (labels[i[w]], labels[j[w]], labels[j[w]],
                   labels[i[w]], labels[k[w]]))


def _find_bottom(mat, labels):
    bottoms = np.flatnonzero(mat.all(axis=1))
    if len(bottoms) == 0:
        raise NoBottom("no element precedes all others")
    return int(bottoms[0])
