import os
os.environ["OPENBLAS_NUM_THREADS"] = "1"
import time
import numpy as np
import monoflow as mf

# criterion 1: SSH chain, 101 sites
t0 = time.time()
box = mf.make_box(1, 50, offset=(0.0,), fiber_dim=1)
H1, S1, F = mf.build_ssh(box, 1.0)
_, S0, _ = mf.build_ssh(box, 0.0)


def ssh_at(a):
    _, Sa, _ = mf.build_ssh(box, a)
    return F @ Sa @ S0.conj().T


res = mf.sf_unitary(ssh_at, F, grid=np.linspace(0, 1, 101), box=box)
Pi = mf.hardy_projection(F)
ind = mf.kernel_count(Pi, S0, box)
t1 = time.time()
print("SSH: SF =", res.net_flow, " Ind =", ind.value,
      " time %.2f s" % (t1 - t0))
for c in res.crossings:
    print("  bulk crossing: alpha* %.4f dir %+d" % (c.alpha, c.direction))
print("  diag:", {k: v for k, v in res.diagnostics.items()
                  if k != "boundary_crossings"})
print("  index extra:", ind.extra)

# criterion 2: harness, 50 seeds
t0 = time.time()
rng = np.random.default_rng(7)
ok = 0
fails = []
for trial in range(50):
    n = int(rng.integers(2, 25))
    U0 = mf.haar_unitary(rng, n)
    F2 = mf.random_signature_unitary(rng, n)
    P = (np.eye(n) - F2) / 2
    at = mf.standard_unitary_path(U0, F2)
    r = mf.sf_unitary(at, F2, grid=np.linspace(0, 1, 101), capture="none")
    idx = mf.kernel_count(P, U0)
    if r.net_flow == idx.value:
        ok += 1
    else:
        fails.append((trial, n, r.net_flow, idx.value))
t1 = time.time()
print("harness: %d/50 matches, time %.1f s" % (ok, t1 - t0))
if fails:
    print("  failures:", fails[:5])
