import resource
import time
import warnings

import monoflow as mf

t0 = time.time()
box = mf.make_box(3, 6)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    model = mf.OddChiralModel(box, 1.0)
sweep = mf.CacheSweep(model.gamma, box)
print(f"built model n_sites={box.n_sites} t={time.time()-t0:.1f}s", flush=True)
ind = mf.fedosov_index(mf.hardy_projection(model.flux_axis()),
                       model.chiral_block(sweep.cache(0.0)), box)
rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1e6
print(f"rho=6: value={ind.value} raw={ind.raw:.6f} raws={ind.extra['raws']} "
      f"stable={ind.stable} t={time.time()-t0:.1f}s maxrss={rss:.2f}GB")
