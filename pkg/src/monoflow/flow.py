"""Spectral-flow engines for selfadjoint, unitary, and non-normal paths.

Net flow is computed by marching eigenvalue counts across the grid: for a
selfadjoint path the number of eigenvalues below mu changes by the signed
number of crossings in each interval, which is immune to track-label
scrambling at degeneracies.  Intervals with a count change are bisected
until the crossing is localized, then the crossing eigenvector decides the
bulk/boundary label.  Eigenvector-matched tracks are kept separately for
trajectory tables and overlap diagnostics.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

from .lattice import LatticeBox

DEFAULT_GRID_POINTS = 101
REFINE_TOL = 1e-4
PIN_TOL = 1e-12
ENDPOINT_GAP = 1e-6
MATCHING_THRESHOLD = 0.7


class FlowError(RuntimeError):
    pass


@dataclass
class Crossing:
    alpha: float
    direction: int
    track: int
    bulk: bool = True


@dataclass
class EigenPath:
    """Matched eigenvalue trajectories over the alpha grid.

    tracks[i, j] is eigenvalue j at grid[i] under persistent labels;
    overlaps[i, j] is the matched eigenvector overlap with the previous
    grid point (1.0 at i=0), bulk_weight the non-boundary probability.
    """

    grid: np.ndarray
    tracks: np.ndarray
    overlaps: Optional[np.ndarray] = None
    bulk_weight: Optional[np.ndarray] = None
    matching_threshold: float = MATCHING_THRESHOLD

    @property
    def n_tracks(self) -> int:
        return self.tracks.shape[1]

    def min_overlap(self) -> float:
        if self.overlaps is None:
            return float("nan")
        return float(self.overlaps[1:].min()) if len(self.grid) > 1 else 1.0

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("alpha,track,re,im,bulk\n")
            for i, a in enumerate(self.grid):
                for j in range(self.n_tracks):
                    z = self.tracks[i, j]
                    if self.bulk_weight is None:
                        b = 1
                    else:
                        b = int(self.bulk_weight[i, j] >= 0.5)
                    f.write(f"{a:.10g},{j},{z.real:.12g},{z.imag:.12g},{b}\n")


@dataclass
class FlowResult:
    crossings: list
    net_flow: int
    mode: str
    diagnostics: dict = field(default_factory=dict)
    path: Optional[EigenPath] = field(default=None, repr=False)

    def all_crossings(self) -> list:
        return self.crossings + self.diagnostics.get("boundary_crossings", [])

    def net_flow_all(self) -> int:
        return sum(c.direction for c in self.all_crossings())


def _as_path(path, grid):
    """Accept a HamiltonianPath-like object or a bare callable plus grid."""
    if hasattr(path, "at") and hasattr(path, "alphas"):
        return path.at, np.asarray(path.alphas, dtype=float), \
            getattr(path, "box", None)
    if grid is None:
        grid = np.linspace(0.0, 1.0, DEFAULT_GRID_POINTS)
    return path, np.asarray(grid, dtype=float), None


def _boundary_mask(box: Optional[LatticeBox], dim: int):
    if box is None:
        return np.zeros(dim, dtype=bool)
    f = dim // box.n_sites
    return np.repeat(box.boundary_site_mask(), f)


class _Memo:
    """Eigenvalue (and on demand eigenvector) store keyed by alpha.

    Eigenvalues are cheap and kept forever; eigenvector bases are large
    (dim^2 complex) and only the most recent few are retained.
    """

    MAX_VECS = 12

    def __init__(self, at: Callable, herm: bool):
        self.at = at
        self.herm = herm
        self.vals = {}
        self.vecs = {}

    def w(self, a: float) -> np.ndarray:
        if a not in self.vals:
            H = self.at(a)
            if self.herm:
                self.vals[a] = sla.eigvalsh(H)
            else:
                w = np.linalg.eigvals(H)
                self.vals[a] = w[np.lexsort((w.real, w.imag))]
        return self.vals[a]

    def wv(self, a: float):
        if a not in self.vecs:
            H = self.at(a)
            if self.herm:
                w, V = sla.eigh(H)
            else:
                w, V = np.linalg.eig(H)
                order = np.lexsort((w.real, w.imag))
                w, V = w[order], V[:, order]
            while len(self.vecs) >= self.MAX_VECS:
                self.vecs.pop(next(iter(self.vecs)))
            self.vecs[a] = (w, V)
            self.vals[a] = w
        return self.vecs[a]


def _counts(w: np.ndarray, mu: float, herm: bool, pin: float):
    x = w.real - (mu if herm else 0.0)
    return int(np.sum(x < -pin)), int(np.sum(np.abs(x) <= pin))


def _bulk_weight_of(V: np.ndarray, cols, bmask: np.ndarray) -> np.ndarray:
    p = np.abs(V[:, cols]) ** 2
    p = p / p.sum(axis=0)
    return 1.0 - p[bmask].sum(axis=0)


def _matched_flips(memo: _Memo, a: float, b: float, mu: float, herm: bool,
                   pin: float, window: float, diag: dict):
    """Near-level eigenvectors at a matched to those at b; returns
    (row at a, col at b, direction) for every matched sign flip."""
    wa, Va = memo.wv(a)
    wb, Vb = memo.wv(b)
    xa = wa.real - (mu if herm else 0.0)
    xb = wb.real - (mu if herm else 0.0)
    ia = np.where(np.abs(xa) < window)[0]
    ib = np.where(np.abs(xb) < window)[0]
    flips = []
    if len(ia) == 0 or len(ib) == 0:
        return flips
    O = np.abs(Va[:, ia].conj().T @ Vb[:, ib])
    if not herm:
        O = O / np.maximum(np.linalg.norm(O, axis=0, keepdims=True), 1e-30)
    for r in range(len(ia)):
        c = int(np.argmax(O[r]))
        if O[r, c] < 0.5:
            diag["unmatched"] = diag.get("unmatched", 0) + 1
            continue
        sa, sb = xa[ia[r]], xb[ib[c]]
        if sa < -pin and sb > pin:
            flips.append((int(ia[r]), int(ib[c]), 1))
        elif sa > pin and sb < -pin:
            flips.append((int(ia[r]), int(ib[c]), -1))
    return flips


def _resolve_interval(memo: _Memo, a: float, b: float, mu: float, herm: bool,
                      bmask: np.ndarray, pin: float, window: float,
                      refine_tol: float, diag: dict, depth: int = 24):
    """Localize every matched sign flip inside [a, b] by bisection.

    Eigenvector matching sees simultaneous opposite crossings (a bulk
    state and an edge state trading places leave all level counts
    unchanged) that pure counting cannot.
    """
    flips = _matched_flips(memo, a, b, mu, herm, pin, window, diag)
    if not flips:
        return []
    if b - a <= refine_tol or depth <= 0:
        out = []
        for r, c, direction in flips:
            if bmask.any():
                _, Va = memo.wv(a)
                _, Vb = memo.wv(b)
                bw = max(float(_bulk_weight_of(Va, [r], bmask)[0]),
                         float(_bulk_weight_of(Vb, [c], bmask)[0]))
                bulk = bw >= 0.5
            else:
                bulk = True
            out.append(Crossing(alpha=0.5 * (a + b), direction=direction,
                                track=r, bulk=bulk))
        return out
    m = 0.5 * (a + b)
    diag["refinements"] += 1
    return (_resolve_interval(memo, a, m, mu, herm, bmask, pin, window,
                              refine_tol, diag, depth - 1)
            + _resolve_interval(memo, m, b, mu, herm, bmask, pin, window,
                                refine_tol, diag, depth - 1))


def _march(memo: _Memo, grid: np.ndarray, mu: float, herm: bool,
           bmask: np.ndarray, refine_tol: float, pin: float,
           max_refine: int, bulk_only: bool):
    """Two-stage crossing detection over the grid.

    Cheap eigenvalue counts flag every interval where states cross or
    approach the level; flagged intervals are then resolved by matched
    eigenvector sign flips, bisected until each crossing is localized.
    """
    crossings = []
    diag = {"refinements": 0, "active_intervals": 0}
    gap0 = min(_min_gap(memo.w(grid[0]), mu, herm, pin),
               _min_gap(memo.w(grid[-1]), mu, herm, pin))
    dip = 0.25 * gap0 if gap0 > 0 else 10 * refine_tol
    window = max(dip, 10 * refine_tol)

    stack = [(grid[i], grid[i + 1]) for i in range(len(grid) - 1)][::-1]
    while stack:
        a, b = stack.pop()
        Na, pa = _counts(memo.w(a), mu, herm, pin)
        Nb, pb = _counts(memo.w(b), mu, herm, pin)
        k = Nb - Na
        if k != 0 or pa != pb:
            # a count change localizes cheaply by eigenvalue bisection
            if b - a > refine_tol and diag["refinements"] < max_refine:
                m = 0.5 * (a + b)
                diag["refinements"] += 1
                stack.append((m, b))
                stack.append((a, m))
                continue
            diag["active_intervals"] += 1
            found = _resolve_interval(memo, a, b, mu, herm, bmask, pin,
                                      window, refine_tol, diag)
            if not found and k != 0:
                # matching failed; fall back to count bookkeeping
                direction = -1 if k > 0 else 1
                xa = memo.w(a).real - (mu if herm else 0.0)
                xa = np.where(np.abs(xa) <= pin, np.inf, xa)
                order = np.argsort(np.abs(xa))[:abs(k)]
                if bmask.any():
                    _, Va = memo.wv(a)
                    bws = _bulk_weight_of(Va, [int(j) for j in order], bmask)
                else:
                    bws = np.ones(len(order))
                found = [Crossing(alpha=0.5 * (a + b), direction=direction,
                                  track=int(j), bulk=bw >= 0.5)
                         for j, bw in zip(order, bws)]
                diag["count_fallback"] = diag.get("count_fallback", 0) + 1
            crossings.extend(found)
            continue
        # counts silent; a dip toward the level can hide an up-down pair
        near = min(_min_gap(memo.w(a), mu, herm, pin),
                   _min_gap(memo.w(b), mu, herm, pin))
        if dip <= near < 4 * dip:
            # probe the midpoint before trusting the endpoints
            m = 0.5 * (a + b)
            near = min(near, _min_gap(memo.w(m), mu, herm, pin))
            _, pm = _counts(memo.w(m), mu, herm, pin)
            if pm != pa:
                near = 0.0
        if near < dip:
            diag["active_intervals"] += 1
            crossings.extend(
                _resolve_interval(memo, a, b, mu, herm, bmask, pin, window,
                                  refine_tol, diag))

    if bulk_only:
        bulk_list = [c for c in crossings if c.bulk]
        boundary = [c for c in crossings if not c.bulk]
    else:
        bulk_list = crossings
        boundary = []
    diag["boundary_crossings"] = boundary
    return bulk_list, diag


def _min_gap(w: np.ndarray, mu: float, herm: bool, pin: float) -> float:
    x = np.abs(w.real - (mu if herm else 0.0))
    x = x[x > pin]
    return float(x.min()) if len(x) else 0.0


def _greedy_assign(P: np.ndarray):
    """Row -> column assignment maximizing overlap, LSA on conflicts."""
    n = P.shape[0]
    cols = np.argmax(P, axis=1)
    perm = -np.ones(n, dtype=int)
    used = set()
    conflicted = []
    for j in np.argsort(-P[np.arange(n), cols]):
        c = cols[j]
        if c in used:
            conflicted.append(j)
        else:
            perm[j] = c
            used.add(c)
    if conflicted:
        free = sorted(set(range(n)) - used)
        sub = P[np.ix_(conflicted, free)]
        ri, ci = linear_sum_assignment(-sub)
        for r, c in zip(ri, ci):
            perm[conflicted[r]] = free[c]
    return perm


def _capture_path(memo: _Memo, grid: np.ndarray, herm: bool,
                  bmask: np.ndarray, threshold: float, with_vectors: bool):
    """Trajectory table over the grid; matched labels when vectors are on."""
    if not with_vectors:
        tracks = np.stack([memo.w(a) for a in grid])
        return EigenPath(grid=grid.copy(), tracks=tracks.astype(complex),
                         overlaps=None, bulk_weight=None,
                         matching_threshold=threshold)
    return _capture_chain(memo, grid, herm, bmask, threshold)


def _cluster_accept(O: np.ndarray, perm: np.ndarray, threshold: float) -> bool:
    """Degenerate clusters: accept when the subspace overlap is large even
    though individual vector overlaps are not."""
    bad = np.where(O[np.arange(len(perm)), perm] < threshold)[0]
    if len(bad) == 0:
        return True
    sub = O[np.ix_(bad, perm[bad])]
    s = np.linalg.svd(sub, compute_uv=False)
    return bool(s.min() > threshold * 0.5)


def _capture_chain(memo: _Memo, pts: np.ndarray, herm: bool,
                   bmask: np.ndarray, threshold: float) -> EigenPath:
    n = None
    track_vals, track_ov, track_bw = [], [], []
    prev_V = None
    labels = None
    for a in pts:
        w, V = memo.wv(a)
        if prev_V is None:
            n = len(w)
            labels = np.arange(n)
            ov = np.ones(n)
        else:
            if herm:
                O = np.abs(prev_V.conj().T @ V)
            else:
                try:
                    O = np.abs(np.linalg.solve(prev_V, V))
                except np.linalg.LinAlgError:
                    O = np.abs(prev_V.conj().T @ V)
                O = O / np.maximum(
                    np.linalg.norm(O, axis=0, keepdims=True), 1e-30)
            perm = _greedy_assign(O)
            ov_step = O[np.arange(n), perm]
            if ov_step.min() < threshold:
                if not _cluster_accept(O, perm, threshold):
                    warnings.warn(
                        f"track overlap {ov_step.min():.3f} below threshold "
                        f"near alpha={a:.5f}", RuntimeWarning, stacklevel=5)
            ov = ov_step[labels]
            labels = perm[labels]
        track_vals.append(w[labels])
        track_ov.append(ov)
        if bmask.any():
            track_bw.append(_bulk_weight_of(V, labels, bmask))
        else:
            track_bw.append(np.ones(n))
        prev_V = V
    return EigenPath(grid=pts.copy(), tracks=np.stack(track_vals),
                     overlaps=np.stack(track_ov),
                     bulk_weight=np.stack(track_bw),
                     matching_threshold=threshold)


def sf_selfadjoint(path, mu: float = 0.0, grid=None, *,
                   box: Optional[LatticeBox] = None,
                   refine_tol: float = REFINE_TOL,
                   endpoint_gap: float = ENDPOINT_GAP,
                   capture: str = "auto", max_refine: int = 400,
                   bulk_only: bool = True) -> FlowResult:
    """Signed count of eigenvalue crossings of the level mu, upward = +1.

    Bulk-labeled crossings only by default; boundary crossings are kept in
    diagnostics["boundary_crossings"].  Endpoints must be gapped at mu
    among bulk states.
    """
    at, g, pbox = _as_path(path, grid)
    box = box if box is not None else pbox
    memo = _Memo(at, herm=True)
    dim = len(memo.w(g[0]))
    bmask = _boundary_mask(box, dim)
    _endpoint_check(memo, g, mu, True, bmask, endpoint_gap)
    base = g
    crossings, diag = _march(memo, base, mu, True, bmask, refine_tol,
                             PIN_TOL, max_refine, bulk_only)
    path_obj = None
    if capture != "none":
        with_vectors = capture == "full" or (capture == "auto" and dim <= 1300)
        path_obj = _capture_path(memo, base, True, bmask,
                                 MATCHING_THRESHOLD, with_vectors)
    diag["min_gap"] = min(_min_gap(memo.w(a), mu, True, PIN_TOL)
                          for a in base)
    diag["endpoint_gap"] = (_min_gap(memo.w(g[0]), mu, True, PIN_TOL),
                            _min_gap(memo.w(g[-1]), mu, True, PIN_TOL))
    net = sum(c.direction for c in crossings)
    return FlowResult(crossings=crossings, net_flow=net,
                      mode="selfadjoint_through_mu", diagnostics=diag,
                      path=path_obj)


def _endpoint_check(memo, grid, mu, herm, bmask, gap):
    for a in (grid[0], grid[-1]):
        w = memo.w(a)
        x = np.abs(w.real - (mu if herm else 0.0))
        close = np.where(x < gap)[0]
        if len(close) == 0:
            continue
        if not bmask.any():
            raise FlowError(
                f"endpoint alpha={a} has an eigenvalue within {gap} of the "
                "crossing line")
        _, V = memo.wv(a)
        bw = _bulk_weight_of(V, list(close), bmask)
        if (bw >= 0.5).any():
            raise FlowError(
                f"endpoint alpha={a} has a bulk eigenvalue within {gap} of "
                "the crossing line")


def sf_unitary(path, F: Optional[np.ndarray] = None, grid=None, *,
               box: Optional[LatticeBox] = None,
               unitarity_tol: float = 1e-8, capture: str = "auto",
               **kw) -> FlowResult:
    """Flow of a unitary path through -1 ... computed on the real parts.

    Checks unitarity of every evaluated point on the interior block (the
    open-box truncation of a dressed shift is only a partial isometry on
    the boundary).  Does not distinguish upper or lower semicircle passage.
    """
    at, g, pbox = _as_path(path, grid)
    box = box if box is not None else pbox
    worst = {"dev": 0.0}

    first = at(g[0])
    dim = first.shape[0]
    bmask = _boundary_mask(box, dim)
    interior = ~bmask

    def at_re(a):
        W = at(a)
        D = W.conj().T @ W - np.eye(dim)
        dev = np.abs(D[np.ix_(interior, interior)]).max()
        worst["dev"] = max(worst["dev"], dev)
        if dev > unitarity_tol:
            raise FlowError(f"path point alpha={a} is not unitary on the "
                            f"interior block (dev {dev:.2e})")
        return 0.5 * (W + W.conj().T)

    if F is not None:
        W0, W1 = first, at(g[-1])
        for name, W in (("start", W0), ("end", W1)):
            herm_dev = np.abs((W - W.conj().T)[np.ix_(interior, interior)]).max()
            if herm_dev > unitarity_tol:
                raise FlowError(f"{name} point is not selfadjoint on the "
                                f"interior block (dev {herm_dev:.2e})")
        d0 = np.abs((W0 - F)[np.ix_(interior, interior)]).max()
        if d0 > unitarity_tol:
            warnings.warn(f"start point differs from F by {d0:.2e} on the "
                          "interior block", RuntimeWarning, stacklevel=2)

    res = sf_selfadjoint(at_re, mu=0.0, grid=g, box=box, capture=capture,
                         **kw)
    res.mode = "unitary_realpart"
    res.diagnostics["unitarity_dev"] = worst["dev"]
    return res


def sf_nonnormal(path, grid=None, *, box: Optional[LatticeBox] = None,
                 refine_tol: float = REFINE_TOL,
                 endpoint_tol: float = 1e-8, capture: str = "auto",
                 max_refine: int = 400, bulk_only: bool = None,
                 imag_warn: float = 1e-8) -> FlowResult:
    """Net signed count of eigenvalue crossings of Re = 0, left to right
    = +1, by complex eigenvalue marching.

    Endpoints must be invertible; a warning is issued when their spectra
    are not real.  Near-degenerate steps are resolved by grid refinement.
    """
    at, g, pbox = _as_path(path, grid)
    box = box if box is not None else pbox
    memo = _Memo(at, herm=False)
    dim = len(memo.w(g[0]))
    bmask = _boundary_mask(box, dim)
    if bulk_only is None:
        bulk_only = box is not None
    for a in (g[0], g[-1]):
        w = memo.w(a)
        if np.abs(w).min() < endpoint_tol:
            raise FlowError(f"endpoint alpha={a} is not invertible")
        if np.abs(w.imag).max() > imag_warn:
            warnings.warn(
                f"endpoint alpha={a} spectrum is not real "
                f"(max |Im| = {np.abs(w.imag).max():.2e})",
                RuntimeWarning, stacklevel=2)
    _endpoint_check(memo, g, 0.0, False, bmask, endpoint_tol)
    base = g
    crossings, diag = _march(memo, base, 0.0, False, bmask, refine_tol,
                             PIN_TOL, max_refine, bulk_only)
    path_obj = None
    if capture != "none":
        with_vectors = capture == "full" or (capture == "auto" and dim <= 600)
        path_obj = _capture_path(memo, base, False, bmask,
                                 MATCHING_THRESHOLD, with_vectors)
    diag["min_gap"] = min(_min_gap(memo.w(a), 0.0, False, PIN_TOL)
                          for a in base)
    net = sum(c.direction for c in crossings)
    return FlowResult(crossings=crossings, net_flow=net,
                      mode="nonnormal_imaginary_axis", diagnostics=diag,
                      path=path_obj)


def _expm_iherm(X: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(X)
    return (V * np.exp(1j * w)) @ V.conj().T


def polar_homotopy(A: np.ndarray, s: float) -> np.ndarray:
    """A |A|^{-s}: the real-analytic deformation from A to its unitary
    polar factor."""
    w, V = np.linalg.eigh(A.conj().T @ A)
    if w.min() < 1e-24:
        raise FlowError("polar homotopy needs an invertible operator")
    mid = (V * w ** (-0.5 * s)) @ V.conj().T
    return A @ mid


def standard_unitary_path(U0: np.ndarray, F: np.ndarray) -> Callable:
    """Standard unitary interpolation from F to U0 F U0^*,

        W_alpha = exp(i pi/2 ((1-alpha) F + alpha U0 F U0^* - 1)),

    with selfadjoint unitary endpoints W_0 = F and W_1 = U0 F U0^*.
    Equals U0 exp(i pi/2 (F - 1 + alpha U0^*[F,U0])) U0^* run backwards.
    """
    dim = U0.shape[0]
    G = U0 @ F @ U0.conj().T

    def at(alpha: float) -> np.ndarray:
        X = 0.5 * np.pi * ((1.0 - alpha) * F + alpha * G - np.eye(dim))
        return _expm_iherm(X)

    return at


def haar_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    Z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def random_signature_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Selfadjoint unitary with a random signature in a random basis."""
    signs = rng.choice([-1.0, 1.0], size=dim)
    if np.all(signs == signs[0]):
        signs[rng.integers(dim)] *= -1.0
    V = haar_unitary(rng, dim)
    return (V * signs) @ V.conj().T
