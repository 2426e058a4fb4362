"""Finite-volume tight-binding models with monopole-dressed shift operators.

Hamiltonians are non-commutative polynomials in the dressed shifts with
matrix coefficients on a model fiber; the dressing acts on a separate
Clifford fiber, so flux-axis conjugation F . F touches only the phases.
Covered families: the even-d Dirac model (graded, half-blocks h_{+-alpha}),
the odd-d chiral model (off-diagonal block A_alpha), the SSH chain with its
exact kink phase, and the two-bond example path used for index detours.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .clifford import build_clifford
from .lattice import LatticeBox, LatticeOperator, shift_pairs
from .monopole import PhaseCache, CacheSweep, monopole_shift


@dataclass
class ModelSpec:
    kind: str
    d: int
    mass: float = 0.0
    fermi_level: float = 0.0
    hopping: list = field(default_factory=list)
    potential: Optional[np.ndarray] = None


@dataclass
class HamiltonianPath:
    """An alpha-indexed operator family, materialized one point at a time.

    Desk-scale grids of dense matrices do not fit in memory at once, so the
    grid stores the charges and `at` builds the operator on demand.
    """

    spec: ModelSpec
    alphas: np.ndarray
    at: Callable[[float], np.ndarray]
    kind: str = "selfadjoint"
    blocks: dict = field(default_factory=dict)
    box: Optional[LatticeBox] = None

    def operator(self, alpha: float) -> np.ndarray:
        return self.at(float(alpha))

    def materialize(self) -> list:
        return [self.at(float(a)) for a in self.alphas]


def critical_masses(d: int) -> list:
    return list(range(-d, d + 1, 2))


def _warn_if_critical(d: int, m: float) -> None:
    for c in range(-d, d + 1, 2):
        if abs(m - c) < 1e-6:
            warnings.warn(
                f"mass {m} closes the dispersion gap (critical value {c})",
                RuntimeWarning, stacklevel=3)


def dispersion_gap(d: int, m: float, npts: int = 201) -> float:
    """min_k |E(k)| with E^2 = sum_j sin^2 k_j + (m + sum_j cos k_j)^2.

    Shared dispersion of both model families; vanishes exactly at the
    critical masses.
    """
    k = np.linspace(-np.pi, np.pi, npts, endpoint=False)
    grids = np.meshgrid(*([k] * d), indexing="ij")
    s2 = sum(np.sin(g) ** 2 for g in grids)
    c = m + sum(np.cos(g) for g in grids)
    return float(np.sqrt(s2 + c * c).min())


class EvenDiracModel:
    """h = (1/2i) sum_j (S_j - S_j*) nu_j + (m + (1/2) sum_j (S_j + S_j*)) nu_0.

    The nu matrices represent Cl(d+1); nu_0 carries the mass.  The monopole
    enters through scalar phases on the hops: charge +alpha on the upper
    grading block of the transport fiber, -alpha on the lower.  The full
    operator on the nu (x) gamma fiber is diag(h_alpha, h_{-alpha}) in the
    grading eigenbasis.
    """

    def __init__(self, box: LatticeBox, mass: float, fermi_level: float = 0.0):
        if box.d % 2:
            raise ValueError("even dimension required")
        self.box = box
        self.d = box.d
        self.mass = float(mass)
        self.fermi_level = float(fermi_level)
        self.nu = build_clifford(box.d + 1)
        self.gamma = build_clifford(box.d)
        self.nu0 = self.nu.gammas[-1]
        # forward-hop coefficient of S_j
        self._fwd = [self.nu.gammas[j] / 2j + self.nu0 / 2
                     for j in range(box.d)]
        _warn_if_critical(box.d, mass)
        self.spec = ModelSpec(kind="even_dirac", d=box.d, mass=mass,
                              fermi_level=fermi_level)

    def half_block(self, cache: PhaseCache, lower: bool = False) -> np.ndarray:
        """h_alpha on the nu fiber (lower=True gives h_{-alpha})."""
        box = self.box
        n = box.n_sites
        q = self.nu.fiber_dim
        H = np.zeros((n, q, n, q), dtype=complex)
        for k in range(1, self.d + 1):
            rows, cols = shift_pairs(box, k)
            ph = cache.lower_phases(k) if lower else cache.scalar_phases(k)
            ph = ph[rows]
            C = self._fwd[k - 1]
            H[rows, :, cols, :] += ph[:, None, None] * C
            H[cols, :, rows, :] += np.conj(ph)[:, None, None] * C.conj().T
        i = np.arange(n)
        H[i, :, i, :] += self.mass * self.nu0
        return H.reshape(n * q, n * q)

    def full_operator(self, cache: PhaseCache) -> np.ndarray:
        """H_alpha on site (x) nu (x) gamma, phases as full transport blocks."""
        box = self.box
        n = box.n_sites
        qn = self.nu.fiber_dim
        qg = self.gamma.fiber_dim
        H = np.zeros((n, qn, qg, n, qn, qg), dtype=complex)
        for k in range(1, self.d + 1):
            rows, cols = shift_pairs(box, k)
            M = cache.tables[k - 1][rows]
            C = self._fwd[k - 1]
            H[rows, :, :, cols, :, :] += np.einsum("mp,rcd->rmcpd", C, M)
            H[cols, :, :, rows, :, :] += np.einsum(
                "mp,rcd->rmcpd", C.conj().T, M.conj().swapaxes(1, 2))
        i = np.arange(n)
        H[i, :, :, i, :, :] += self.mass * np.einsum(
            "mp,cd->mcpd", self.nu0, np.eye(qg))
        N = n * qn * qg
        return H.reshape(N, N)

    def grading(self) -> np.ndarray:
        """Gamma = 1_site (x) 1_nu (x) (Clifford grading)."""
        n = self.box.n_sites
        g = np.kron(np.eye(self.nu.fiber_dim), self.gamma.grading)
        return np.kron(np.eye(n), g)

    def flux_axis(self) -> np.ndarray:
        """F = 1_nu (x) gamma_x/|x| per site; needs an origin-free box."""
        n = self.box.n_sites
        qn = self.nu.fiber_dim
        qg = self.gamma.fiber_dim
        f = qn * qg
        F = np.zeros((n, f, n, f), dtype=complex)
        for i, x in enumerate(self.box.sites):
            R = np.linalg.norm(x)
            if R == 0:
                raise ValueError("flux axis undefined at the origin site")
            F[i, :, i, :] = np.kron(np.eye(qn), self.gamma.gamma_v(x) / R)
        return F.reshape(n * f, n * f)

    def half_path(self, alphas, sweep: CacheSweep,
                  lower: bool = False) -> HamiltonianPath:
        at = lambda a: self.half_block(sweep.cache(a), lower=lower)
        return HamiltonianPath(spec=self.spec, alphas=np.asarray(alphas),
                               at=at, kind="selfadjoint", box=self.box,
                               blocks={"h": at})

    def full_path(self, alphas, sweep: CacheSweep) -> HamiltonianPath:
        at = lambda a: self.full_operator(sweep.cache(a))
        return HamiltonianPath(spec=self.spec, alphas=np.asarray(alphas),
                               at=at, kind="selfadjoint", box=self.box)


class OddChiralModel:
    """H = [[0, A], [A*, 0]] with A = (1/2i) sum_j (S_j - S_j*) sigma_j
    - i (m + (1/2) sum_j (S_j + S_j*)).

    The sigma matrices represent Cl(d) on the model fiber; the overall -i on
    the mass part makes d=1, m=0 reduce to A = -i S, a constant phase away
    from the bare shift, with the same unit winding.  JHJ = -H holds exactly
    for J = diag(1, -1) in the block decomposition.
    """

    def __init__(self, box: LatticeBox, mass: float, fermi_level: float = 0.0):
        if box.d % 2 == 0:
            raise ValueError("odd dimension required")
        self.box = box
        self.d = box.d
        self.mass = float(mass)
        self.fermi_level = float(fermi_level)
        self.sigma = build_clifford(box.d)
        self.gamma = build_clifford(box.d)
        qs = self.sigma.fiber_dim
        eye = np.eye(qs)
        self._fwd = [self.sigma.gammas[j] / 2j - 0.5j * eye
                     for j in range(box.d)]
        self._bwd = [-self.sigma.gammas[j] / 2j - 0.5j * eye
                     for j in range(box.d)]
        _warn_if_critical(box.d, mass)
        self.spec = ModelSpec(kind="odd_chiral", d=box.d, mass=mass,
                              fermi_level=fermi_level)

    def chiral_block(self, cache: PhaseCache) -> np.ndarray:
        """A_alpha on site (x) sigma (x) gamma."""
        box = self.box
        n = box.n_sites
        qs = self.sigma.fiber_dim
        qg = self.gamma.fiber_dim
        A = np.zeros((n, qs, qg, n, qs, qg), dtype=complex)
        for k in range(1, self.d + 1):
            rows, cols = shift_pairs(box, k)
            M = cache.tables[k - 1][rows]
            A[rows, :, :, cols, :, :] += np.einsum(
                "mp,rcd->rmcpd", self._fwd[k - 1], M)
            A[cols, :, :, rows, :, :] += np.einsum(
                "mp,rcd->rmcpd", self._bwd[k - 1], M.conj().swapaxes(1, 2))
        N = n * qs * qg
        A = A.reshape(N, N)
        A[np.diag_indices(N)] += -1j * self.mass
        return A

    def full_operator(self, cache: PhaseCache) -> np.ndarray:
        A = self.chiral_block(cache)
        N = A.shape[0]
        H = np.zeros((2 * N, 2 * N), dtype=complex)
        H[:N, N:] = A
        H[N:, :N] = A.conj().T
        return H

    def chiral_symmetry(self) -> np.ndarray:
        N = self.box.n_sites * self.sigma.fiber_dim * self.gamma.fiber_dim
        return np.diag(np.concatenate([np.ones(N), -np.ones(N)]))

    def flux_axis(self) -> np.ndarray:
        """F0 = 1_sigma (x) gamma_x/|x| on one chiral block."""
        n = self.box.n_sites
        qs = self.sigma.fiber_dim
        qg = self.gamma.fiber_dim
        f = qs * qg
        F = np.zeros((n, f, n, f), dtype=complex)
        for i, x in enumerate(self.box.sites):
            R = np.linalg.norm(x)
            if R == 0:
                blk = -np.eye(qg)  # sign convention at the axis site
            else:
                blk = self.gamma.gamma_v(x) / R
            F[i, :, i, :] = np.kron(np.eye(qs), blk)
        return F.reshape(n * f, n * f)

    def flow_blocks(self, cache: PhaseCache, A0inv: np.ndarray,
                    F0: np.ndarray):
        """Diagonal blocks of J F H_alpha H_0^{-1}:
        b1 = F0 A_alpha A_0^{-1} and b2 = -(A_0^{-1} A_alpha F0)^*."""
        A = self.chiral_block(cache)
        b1 = F0 @ A @ A0inv
        b2 = -F0 @ (A0inv @ A).conj().T
        return b1, b2

    def chiral_path(self, alphas, sweep: CacheSweep) -> HamiltonianPath:
        at = lambda a: self.chiral_block(sweep.cache(a))
        return HamiltonianPath(spec=self.spec, alphas=np.asarray(alphas),
                               at=at, kind="nonnormal", box=self.box)

    def full_path(self, alphas, sweep: CacheSweep) -> HamiltonianPath:
        at = lambda a: self.full_operator(sweep.cache(a))
        return HamiltonianPath(spec=self.spec, alphas=np.asarray(alphas),
                               at=at, kind="selfadjoint", box=self.box)


def build_even_dirac(d: int, m: float, box: LatticeBox, alpha: float,
                     sweep: Optional[CacheSweep] = None) -> dict:
    """One grid entry of the even-d Dirac family; see EvenDiracModel."""
    model = EvenDiracModel(box, m)
    if sweep is None:
        sweep = CacheSweep(model.gamma, box)
    cache = sweep.cache(alpha)
    return {"model": model, "cache": cache,
            "h": model.half_block(cache),
            "h_minus": model.half_block(cache, lower=True),
            "H": model.full_operator(cache),
            "Gamma": model.grading(), "F": model.flux_axis()}


def build_odd_chiral(d: int, m: float, box: LatticeBox, alpha: float,
                     sweep: Optional[CacheSweep] = None) -> dict:
    """One grid entry of the odd-d chiral family; see OddChiralModel."""
    model = OddChiralModel(box, m)
    if sweep is None:
        sweep = CacheSweep(model.gamma, box)
    cache = sweep.cache(alpha)
    A = model.chiral_block(cache)
    return {"model": model, "cache": cache, "A": A,
            "H": model.full_operator(cache),
            "J": model.chiral_symmetry(), "F0": model.flux_axis()}


def _ssh_box_data(box: LatticeBox):
    if box.d != 1:
        raise ValueError("SSH lives on a one-dimensional chain")
    if box.offset != (0.0,):
        raise ValueError("SSH chain uses integer sites")
    if box.n_sites < 8:
        raise ValueError("chain too short")
    coords = box.sites[:, 0]
    return coords


def build_ssh(box: LatticeBox, alpha: float):
    """SSH chain with kink phase: S^alpha = sum_{n!=0} |n><n+1|
    + e^{i pi alpha} |0><1|; F = sign(n) with sign(0) = -1.

    Returns (H_alpha, S_alpha, F) as dense arrays, H the chiral doubling
    of S_alpha.  Exact formulas, no transport ODE.
    """
    coords = _ssh_box_data(box)
    n = box.n_sites
    rows, cols = shift_pairs(box, 1)
    S = np.zeros((n, n), dtype=complex)
    S[rows, cols] = 1.0
    i0 = box.index_of([0.0])
    S[i0, box.index_of([1.0])] = np.exp(1j * np.pi * alpha)
    F = np.diag(np.where(coords > 0, 1.0, -1.0)).astype(complex)
    H = np.zeros((2 * n, 2 * n), dtype=complex)
    H[:n, n:] = S
    H[n:, :n] = S.conj().T
    return H, S, F


def chirind_example_path(box: LatticeBox, alpha: float,
                         detour: bool = False) -> np.ndarray:
    """T_alpha = S^0 - 2 alpha |0><1|, the straight interpolation from the
    shift to the operator with a two-dimensional kernel at alpha = 1/2.

    detour=True replaces the bond coefficient 1 - 2 alpha by e^{i pi alpha},
    which circles the singularity (that variant is S^alpha).
    """
    coords = _ssh_box_data(box)
    n = box.n_sites
    rows, cols = shift_pairs(box, 1)
    T = np.zeros((n, n), dtype=complex)
    T[rows, cols] = 1.0
    c = np.exp(1j * np.pi * alpha) if detour else 1.0 - 2.0 * alpha
    T[box.index_of([0.0]), box.index_of([1.0])] = c
    if not detour and abs(alpha - 0.5) < 1e-12:
        warnings.warn("T at alpha=1/2 is singular (kernel dimension 2)",
                      RuntimeWarning, stacklevel=2)
    return T


def chirind_ring_path(n_sites: int, alpha: float, detour: bool = True):
    """Cyclic-chain variant of the example path, where S^0 is unitary and
    the chiral flow path J F T_alpha T_0^{-1} is well defined.

    Sites are labeled -L/2 .. L/2-1; returns (T_alpha, S0, F) with
    F = sign, sign(0) = -1.
    """
    L = int(n_sites)
    if L < 8 or L % 2:
        raise ValueError("ring length must be even and at least 8")
    lo = -L // 2
    labels = np.arange(lo, lo + L)
    pos = {int(v): i for i, v in enumerate(labels)}
    S = np.zeros((L, L), dtype=complex)
    for v in labels:
        nxt = (v + 1 - lo) % L + lo
        S[pos[int(v)], pos[int(nxt)]] = 1.0
    T = S.copy()
    c = np.exp(1j * np.pi * alpha) if detour else 1.0 - 2.0 * alpha
    T[pos[0], pos[1]] = c
    F = np.diag(np.where(labels > 0, 1.0, -1.0)).astype(complex)
    return T, S, F


def build_polynomial(box: LatticeBox, cache: PhaseCache, terms,
                     potential: Optional[np.ndarray] = None) -> np.ndarray:
    """Assemble sum_w coeff_w (x) S^w + W for shift words w.

    A word is a tuple of nonzero ints, +k for S_k and -k for S_k*; the
    coefficient acts on a model fiber, the dressed shifts on the Clifford
    fiber.  The potential, if given, is a site-diagonal block field of
    shape (n_sites, model_dim, model_dim).
    """
    n = box.n_sites
    qg = cache.rep.fiber_dim
    shifts = {k: monopole_shift(cache, k).data for k in range(1, box.d + 1)}
    qm = np.asarray(terms[0][1]).shape[0] if terms else 1
    N = n * qm * qg
    H = np.zeros((N, N), dtype=complex)
    for word, coeff in terms:
        W = np.eye(n * qg, dtype=complex)
        for k in word:
            Sk = shifts[abs(k)]
            W = W @ (Sk if k > 0 else Sk.conj().T)
        C = np.asarray(coeff, dtype=complex)
        blk = W.reshape(n, qg, n, qg)
        H += np.einsum("mp,xcyd->xmcypd", C, blk).reshape(N, N)
    if potential is not None:
        P = np.asarray(potential, dtype=complex)
        Hb = H.reshape(n, qm, qg, n, qm, qg)
        i = np.arange(n)
        Hb[i, :, :, i, :, :] += np.einsum("xmp,cd->xmcpd", P, np.eye(qg))
    return H


def site_profile(Hdiff: np.ndarray, box: LatticeBox) -> np.ndarray:
    """Per-site max |entry| over the row blocks of an operator difference.

    Used as the compact-difference surrogate: monopole dressings decay
    like C/|x|.
    """
    n = box.n_sites
    f = Hdiff.shape[0] // n
    B = np.abs(Hdiff.reshape(n, f, n, f))
    return B.max(axis=(1, 3)).max(axis=1)


def bulk_gap(H: np.ndarray, box: LatticeBox, width: int = 2) -> float:
    """min |eigenvalue| over eigenvectors with < 50% boundary-shell weight."""
    w, V = np.linalg.eigh(H)
    f = H.shape[0] // box.n_sites
    mask = np.repeat(box.boundary_site_mask(width), f)
    bw = (np.abs(V[mask]) ** 2).sum(axis=0)
    bulk = bw < 0.5
    if not bulk.any():
        raise RuntimeError("no bulk-labeled eigenvectors")
    return float(np.abs(w[bulk]).min())
