import numpy as np
import sys
sys.path.insert(0, "src")
import monoflow as mf

# SSH: kernel_count on S0 and S0^2
box = mf.make_box(1, 50, offset=(0.0,))
H, S1, F = mf.build_ssh(box, 1.0)
_, S0, _ = mf.build_ssh(box, 0.0)
P = mf.hardy_projection(F)
i1 = mf.kernel_count(P, S0, box)
print("ssh S0  :", i1.value, i1.extra)
i2 = mf.kernel_count(P, S0 @ S0, box)
print("ssh S0^2:", i2.value, i2.extra)
i0 = mf.kernel_count(P, S0)
print("ssh S0 no box:", i0.value, i0.extra)

# even d=2 rho=8 fedosov vs oracle + regularized input
b2 = mf.make_box(2, 8)
for m in (1.0, -1.0):
    model = mf.EvenDiracModel(b2, m)
    sweep = mf.CacheSweep(model.gamma, b2)
    P0 = mf.fermi_projection(model.half_block(sweep.cache(0.0)), 0.0)
    V = mf.even_flux_unitary(b2, fiber=model.nu.fiber_dim)
    ind = mf.fedosov_index(P0, V, b2)
    ind_s = mf.fedosov_index(P0, 1.7 * V, b2)
    print(f"even m={m:+.0f}: fedosov {ind.value} raw {ind.raw:+.4f} stable {ind.stable}"
          f" | scaled-input {ind_s.value} raw {ind_s.raw:+.4f}")

# d=1 winding oracle
for m in (0.5, 2.0):
    print("d1 winding m=", m, "->", mf.winding_oracle_odd(1, m))
try:
    mf.winding_oracle_odd(1, 1.0)
except mf.GaplessSpectrumError as e:
    print("d1 m=1 raises GaplessSpectrumError:", e)

# index_compression dispatch + edge warning
import warnings
rng = np.random.default_rng(7)
with warnings.catch_warnings(record=True) as rec:
    warnings.simplefilter("always")
    Uh = mf.haar_unitary(rng, P0.shape[0])
    r = mf.index_compression(P0, Uh, b2, method="fedosov")
    print("dense-U warning count:", len(rec), [str(w.message)[:60] for w in rec])
r2 = mf.index_compression(P0, V, b2, method="fedosov")
print("dispatch fedosov == direct:", r2.value == ind.value if False else r2.value)
