import warnings

import numpy as np

import monoflow as mf
from monoflow import index as midx

for rho, m in [(2, 2.0), (4, 1.0), (4, 2.0)]:
    box = mf.make_box(3, rho)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = mf.OddChiralModel(box, m)
    sweep = mf.CacheSweep(model.gamma, box)
    A0 = model.chiral_block(sweep.cache(0.0))
    P = mf.hardy_projection(model.flux_axis())
    B = midx._site_isometry(P, box)
    assert B is not None, "site isometry not detected"
    dev = np.abs(B.conj().T @ B - np.eye(B.shape[1])).max()
    rec = np.abs(B @ B.conj().T - P).max()
    ind_c = mf.fedosov_index(P.copy(), A0.copy(), box)
    keep = midx._site_isometry
    midx._site_isometry = lambda *a: None
    ind_d = mf.fedosov_index(P, A0, box)
    midx._site_isometry = keep
    print(f"rho={rho} m={m}: dim={P.shape[0]} rank={B.shape[1]} "
          f"isom_dev={dev:.2e} recon={rec:.2e}")
    print(f"  compressed raw={ind_c.raw:.10f} raws={ind_c.raws if hasattr(ind_c,'raws') else ind_c.extra['raws']}"
          f" value={ind_c.value} stable={ind_c.stable}")
    print(f"  dense      raw={ind_d.raw:.10f} value={ind_d.value} stable={ind_d.stable}")
    diff = max(abs(a - b) for a, b in zip(ind_c.extra["raws"], ind_d.extra["raws"]))
    print(f"  max raw diff = {diff:.3e}")
    assert diff < 1e-8, diff
print("equivalence ok")
