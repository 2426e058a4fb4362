"""Complex Clifford algebra representations and Pin(d) lifts.

The recursive Pauli-tensor construction gives selfadjoint unitary generators
gamma_1..gamma_d of minimal dimension: 2^{(d-1)/2} for odd d (irreducible),
2^{d/2} for even d together with the grading Gamma.  Orthogonal maps O lift to
unitaries g_O as products of quasi-reflection generators gamma_v.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

sigma0 = np.eye(2, dtype=complex)
sigma1 = np.array([[0, 1], [1, 0]], dtype=complex)
sigma2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
sigma3 = np.array([[1, 0], [0, -1]], dtype=complex)

MAX_DIMENSION = 6


@dataclass(frozen=True)
class CliffordRep:
    """Gamma matrices for dimension d, with grading for even d."""

    d: int
    fiber_dim: int
    gammas: tuple
    grading: np.ndarray | None = None

    def gamma_v(self, v) -> np.ndarray:
        """Contraction sum_k v_k gamma_k; selfadjoint, squares to |v|^2."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.d,):
            raise ValueError(f"vector must have length {self.d}")
        out = np.zeros((self.fiber_dim, self.fiber_dim), dtype=complex)
        for vk, g in zip(v, self.gammas):
            out += vk * g
        return out


@dataclass(frozen=True)
class PinLift:
    """Quasi-reflection factorization data for an orthogonal map.

    g_O = gamma_{v_1} ... gamma_{v_k} acts by g_O gamma_w i(g_O) = gamma_{Ow},
    where i(.) reverses the generator product (equals the adjoint here since
    every gamma_v with real unit v is selfadjoint).
    """

    orthogonal: np.ndarray
    reflection_vectors: tuple
    g_O: np.ndarray
    rep: CliffordRep = field(repr=False)

    def i_g(self) -> np.ndarray:
        """Clifford transposition of the lift: the reversed product."""
        out = np.eye(self.rep.fiber_dim, dtype=complex)
        for v in reversed(self.reflection_vectors):
            out = out @ self.rep.gamma_v(v)
        return out


def build_clifford(d: int, max_dim: int = MAX_DIMENSION) -> CliffordRep:
    """Standard recursive representation of the complex Clifford algebra.

    Odd -> even appends gamma_{d+1} = sigma2 x 1 after promoting the existing
    generators with sigma1, and the grading becomes sigma3 x 1; even -> odd
    absorbs the grading as the new generator.  Deterministic for fixed d.
    """
    if d < 1:
        raise ValueError("dimension must be a positive integer")
    if d > max_dim:
        raise ValueError(f"dimension {d} exceeds configured maximum {max_dim}")
    gammas = [np.array([[1.0 + 0j]])]
    grading = None
    for k in range(2, d + 1):
        if k % 2 == 0:
            gammas = [np.kron(sigma1, g) for g in gammas]
            half = gammas[0].shape[0] // 2
            gammas.append(np.kron(sigma2, np.eye(half)))
            grading = np.kron(sigma3, np.eye(half))
        else:
            gammas.append(grading)
            grading = None
    gammas = tuple(np.ascontiguousarray(g) for g in gammas)
    return CliffordRep(d=d, fiber_dim=gammas[0].shape[0], gammas=gammas,
                       grading=grading)


def gamma_v(rep: CliffordRep, v) -> np.ndarray:
    return rep.gamma_v(v)


def quasi_reflection(v) -> np.ndarray:
    """R_v = 2 v v^T - 1: fixes v, flips its orthogonal complement."""
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    return 2.0 * np.outer(v, v) - np.eye(len(v))


def _normalize_sign(v, tol):
    idx = int(np.argmax(np.abs(v) > tol))
    if v[idx] < 0:
        v = -v
    return v


def quasi_reflection_vectors(O, tol: float = 1e-10) -> list:
    """Factor an orthogonal O into quasi-reflections, O = R_{v1} R_{v2} ...

    Proper maps decompose via the real Schur form: each rotation block by
    theta in span(a, b) equals R_u R_v with v = a and u at angle theta/2;
    -1 eigenvalue pairs are pi-rotations.  det R_v = (-1)^{d-1}, so improper
    maps are reachable only in even d (peel off R_u for a fixed vector u).
    """
    O = np.asarray(O, dtype=float)
    d = O.shape[0]
    if np.abs(O.T @ O - np.eye(d)).max() > tol:
        raise ValueError("input matrix is not orthogonal")
    work = O
    trailing = []
    if np.linalg.det(O) < 0:
        if d % 2 == 1:
            raise ValueError(
                "improper orthogonal map has no quasi-reflection "
                "factorization in odd dimension")
        # even d: the +1 eigenspace of an improper map is odd-dimensional,
        # so a fixed vector exists; O = (O R_u) R_u with O R_u proper.
        U, s, Vh = np.linalg.svd(work - np.eye(d))
        u = Vh[-1] / np.linalg.norm(Vh[-1])
        work = work @ quasi_reflection(u)
        trailing = [u]
    T, Z = sla.schur(work, output="real")
    i = 0
    blocks = []
    minus = []
    while i < d:
        if i + 1 < d and abs(T[i + 1, i]) > tol:
            theta = np.arctan2(T[i + 1, i], T[i, i])
            blocks.append((Z[:, i].copy(), Z[:, i + 1].copy(), theta))
            i += 2
        else:
            if T[i, i] < 0:
                minus.append(Z[:, i].copy())
            i += 1
    for j in range(0, len(minus), 2):
        blocks.append((minus[j], minus[j + 1], np.pi))
    blocks.sort(key=lambda blk: abs(blk[2]))
    vecs = []
    for a, b, theta in blocks:
        if abs(theta) < tol:
            continue
        u = np.cos(theta / 2) * a + np.sin(theta / 2) * b
        vecs.append(_normalize_sign(u, tol))
        vecs.append(_normalize_sign(a, tol))
    vecs.extend(_normalize_sign(u, tol) for u in trailing)
    return vecs


def pin_lift(rep: CliffordRep, O, tol: float = 1e-10) -> PinLift:
    """Lift an orthogonal map to the Clifford fiber.

    Raises ValueError for non-orthogonal input and for improper maps in
    odd dimension (no factorization exists there).
    """
    O = np.asarray(O, dtype=float)
    if O.shape != (rep.d, rep.d):
        raise ValueError(f"expected a {rep.d}x{rep.d} matrix")
    vecs = quasi_reflection_vectors(O, tol=tol)
    g = np.eye(rep.fiber_dim, dtype=complex)
    for v in vecs:
        g = g @ rep.gamma_v(v)
    return PinLift(orthogonal=O, reflection_vectors=tuple(vecs), g_O=g, rep=rep)
