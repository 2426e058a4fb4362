import os
os.environ["OPENBLAS_NUM_THREADS"] = "1"
import sys
import time
import warnings
import numpy as np
import monoflow as mf

rho = int(sys.argv[1]) if len(sys.argv) > 1 else 2
m = float(sys.argv[2]) if len(sys.argv) > 2 else 2.0
npts = int(sys.argv[3]) if len(sys.argv) > 3 else 26

box = mf.make_box(3, rho, offset=(0.5, 0.5, 0.5), fiber_dim=1)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    model = mf.OddChiralModel(box, m)
sweep = mf.CacheSweep(model.gamma, box)
N = box.n_sites * 4
print("rho %d  m %g  block dim %d" % (rho, m, N))

t0 = time.time()
A0 = model.chiral_block(sweep.cache(0.0))
print("sigma_min(A0) = %.4f  build %.1f s" % (
    np.linalg.svd(A0, compute_uv=False)[-1], time.time() - t0))
A0inv = np.linalg.inv(A0)
F0 = model.flux_axis()

t0 = time.time()
np.linalg.eigvals(A0)
t_vals = time.time() - t0
t0 = time.time()
np.linalg.eig(A0)
t_vecs = time.time() - t0
print("eigvals %.2f s   eig %.2f s" % (t_vals, t_vecs))

grid = np.linspace(0.0, 1.0, npts)
res = []
for which in (0, 1):
    at = lambda a: model.flow_blocks(sweep.cache(a), A0inv, F0)[which]
    t0 = time.time()
    r = mf.sf_nonnormal(at, grid, box=box, capture="none")
    res.append(r)
    print("block %d: SF = %+d  time %.1f s" % (which, r.net_flow,
                                               time.time() - t0))
    for c in r.crossings:
        print("   bulk: alpha* %.4f dir %+d" % (c.alpha, c.direction))
    for c in r.diagnostics["boundary_crossings"]:
        print("   bdry: alpha* %.4f dir %+d" % (c.alpha, c.direction))
    d = dict(r.diagnostics)
    d.pop("boundary_crossings", None)
    print("   diag:", d)
print("SF(JFH H0^-1) =", res[0].net_flow + res[1].net_flow)

t0 = time.time()
Pi = mf.hardy_projection(F0)
ind = mf.fedosov_index(Pi, A0, box)
print("Ind(Pi A0 Pi) = %+d  raw %.4f  stab %.2g  stable %s  time %.1f s"
      % (ind.value, ind.raw, ind.stability, ind.stable, time.time() - t0))

try:
    orc = mf.winding_oracle_odd(3, m)
    print("winding oracle =", orc)
except mf.GaplessSpectrumError as e:
    print("winding oracle: GaplessSpectrumError:", e)
