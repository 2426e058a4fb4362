"""Finite boxes in Z^d, the position Dirac operator, and its unitary phase F.

Sites carry a half-integer offset by default so that R(x) = |x| never vanishes
and the monopole sits at a cell center.  All operators are dense complex
matrices over (sites x fiber), site-major.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .clifford import CliffordRep


@dataclass(frozen=True)
class LatticeBox:
    d: int
    radius: int
    offset: tuple
    fiber_dim: int
    sites: np.ndarray = field(repr=False)  # (n_sites, d), lexicographic

    @property
    def n_sites(self) -> int:
        return self.sites.shape[0]

    @property
    def dim(self) -> int:
        return self.n_sites * self.fiber_dim

    def site_key(self, x) -> tuple:
        # doubled integer coordinates are exact for offsets in {0, 1/2}
        return tuple(int(round(2 * c)) for c in np.atleast_1d(x))

    def index_of(self, x) -> int:
        return self._index[self.site_key(x)]

    def contains(self, x) -> bool:
        return self.site_key(x) in self._index

    def __post_init__(self):
        index = {self.site_key(p): i for i, p in enumerate(self.sites)}
        object.__setattr__(self, "_index", index)

    def infnorms(self) -> np.ndarray:
        return np.abs(self.sites).max(axis=1)

    def boundary_site_mask(self, width: int = 2) -> np.ndarray:
        """True on the outer `width` shells of the box."""
        r = self.infnorms()
        return r > r.max() - width

    def boundary_mask(self, width: int = 2) -> np.ndarray:
        """Boundary mask expanded over the fiber, length == self.dim."""
        return np.repeat(self.boundary_site_mask(width), self.fiber_dim)


def make_box(d: int, radius: int, fiber_dim: int = 1, offset=None) -> LatticeBox:
    """Sites x in Z^d + offset with |x|_inf <= radius, lexicographic order."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    if offset is None:
        offset = (0.5,) * d
    offset = tuple(float(o) for o in offset)
    if any(o not in (0.0, 0.5) for o in offset):
        raise ValueError("offset entries must be 0 or 1/2")
    axes = []
    for o in offset:
        if o == 0.5:
            axes.append(np.arange(-radius + 0.5, radius + 0.5))
        else:
            axes.append(np.arange(-radius, radius + 1.0))
    sites = np.array(list(itertools.product(*axes)), dtype=float)
    return LatticeBox(d=d, radius=radius, offset=offset, fiber_dim=fiber_dim,
                      sites=sites)


@dataclass
class LatticeOperator:
    """Dense operator over (sites x fiber) with optional structure flags."""

    box: LatticeBox
    data: np.ndarray
    flags: frozenset = frozenset()

    def check_flags(self, tol: float = 1e-10) -> None:
        A = self.data
        if "hermitian" in self.flags:
            if np.abs(A - A.conj().T).max() > tol:
                raise ValueError("operator flagged hermitian is not")
        if "unitary" in self.flags:
            dev = np.abs(A.conj().T @ A - np.eye(A.shape[0])).max()
            if dev > tol:
                raise ValueError(f"operator flagged unitary is not ({dev:.2e})")

    def __matmul__(self, other):
        rhs = other.data if isinstance(other, LatticeOperator) else other
        return LatticeOperator(self.box, self.data @ rhs)

    @property
    def dim(self) -> int:
        return self.data.shape[0]


def shift_pairs(box: LatticeBox, k: int):
    """Index arrays (rows, cols) with sites[rows] + e_k == sites[cols]."""
    e = np.zeros(box.d)
    e[k - 1] = 1.0
    rows, cols = [], []
    for i, x in enumerate(box.sites):
        y = x + e
        if box.contains(y):
            rows.append(i)
            cols.append(box.index_of(y))
    return np.array(rows, dtype=int), np.array(cols, dtype=int)


def dirac_operator(box: LatticeBox, rep: CliffordRep) -> LatticeOperator:
    """D = sum_j gamma_j X_j, block gamma_x at each site.

    When the box fiber is larger than the Clifford fiber, gamma_x acts on the
    trailing (fastest) factor and the model factor carries the identity.
    """
    q = rep.fiber_dim
    if box.fiber_dim % q != 0:
        raise ValueError("box fiber is not a multiple of the Clifford fiber")
    m = box.fiber_dim // q
    n = box.n_sites
    D = np.zeros((n, box.fiber_dim, n, box.fiber_dim), dtype=complex)
    eye_m = np.eye(m)
    for i, x in enumerate(box.sites):
        D[i, :, i, :] = np.kron(eye_m, rep.gamma_v(x))
    return LatticeOperator(box, D.reshape(box.dim, box.dim),
                           flags=frozenset({"hermitian"}))


def dirac_phase(D: LatticeOperator, tol: float = 1e-12) -> LatticeOperator:
    """F = D |D|^{-1}, computed blockwise per site (D is site-diagonal).

    Fails if any site block is singular, which only happens with zero offset
    at the origin.
    """
    box = D.box
    f = box.fiber_dim
    n = box.n_sites
    A = D.data.reshape(n, f, n, f)
    F = np.zeros_like(A)
    for i in range(n):
        block = A[i, :, i, :]
        w, V = np.linalg.eigh(block)
        if np.abs(w).min() < tol:
            raise ValueError(f"Dirac block at site {box.sites[i]} is singular")
        F[i, :, i, :] = (V * np.sign(w)) @ V.conj().T
    return LatticeOperator(box, F.reshape(box.dim, box.dim),
                           flags=frozenset({"hermitian", "unitary"}))


def split_F(F: LatticeOperator, rep: CliffordRep):
    """Off-diagonal block V of F in the grading eigenbasis, F = [[0, V*], [V, 0]].

    Returns (V, plus_indices, minus_indices); V is unitary on the half fiber.
    """
    if rep.grading is None:
        raise ValueError("splitting needs even dimension (a grading)")
    box = F.box
    q = rep.fiber_dim
    m = box.fiber_dim // q
    half = q // 2
    # grading is sigma3 x 1: the +1 eigenspace is the first half of the
    # Clifford factor within every model component
    plus_f = [mi * q + ci for mi in range(m) for ci in range(half)]
    minus_f = [mi * q + ci for mi in range(m) for ci in range(half, q)]
    n = box.n_sites
    plus = (np.arange(n)[:, None] * box.fiber_dim + np.array(plus_f)).ravel()
    minus = (np.arange(n)[:, None] * box.fiber_dim + np.array(minus_f)).ravel()
    V = F.data[np.ix_(minus, plus)]
    half_box = make_box(box.d, box.radius, fiber_dim=box.fiber_dim // 2,
                        offset=box.offset)
    return LatticeOperator(half_box, V, flags=frozenset({"unitary"})), plus, minus


def hardy_projection(F):
    """Pi = (F + 1)/2 for a selfadjoint unitary F.

    Accepts a LatticeOperator (returned as one) or a bare ndarray.
    """
    if isinstance(F, np.ndarray):
        return 0.5 * (F + np.eye(F.shape[0]))
    n = F.data.shape[0]
    P = 0.5 * (F.data + np.eye(n))
    return LatticeOperator(F.box, P, flags=frozenset({"hermitian"}))
