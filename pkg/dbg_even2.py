import os
os.environ["OPENBLAS_NUM_THREADS"] = "1"
import time
import numpy as np
import monoflow as mf

rho = 8
box = mf.make_box(2, rho, offset=(0.5, 0.5), fiber_dim=1)

for m in (-1.0, 3.0):
    model = mf.EvenDiracModel(box, m)
    sweep = mf.CacheSweep(model.gamma, box)
    t0 = time.time()
    path = model.half_path(np.linspace(0.0, 1.0, 51), sweep)
    res = mf.sf_selfadjoint(path, mu=0.0, capture="none")
    t1 = time.time()
    P0 = mf.fermi_projection(model.half_block(sweep.cache(0.0)), 0.0)
    V = mf.even_flux_unitary(box, fiber=model.nu.fiber_dim)
    ind = mf.fedosov_index(P0, V, box)
    orc = mf.chern_oracle_even(2, m)
    print("m=%+.0f  SF=%+d  Ind=%+d (raw %.3g, stable %s)  oracle=%+d  "
          "time %.1f s" % (m, res.net_flow, ind.value, ind.raw, ind.stable,
                           orc, t1 - t0))
    for c in res.crossings:
        print("   bulk: alpha* %.4f dir %+d" % (c.alpha, c.direction))
    for c in res.diagnostics["boundary_crossings"]:
        print("   bdry: alpha* %.4f dir %+d" % (c.alpha, c.direction))
    d = dict(res.diagnostics)
    d.pop("boundary_crossings", None)
    print("   diag:", d)
