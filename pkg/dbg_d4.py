import time
import sys
sys.path.insert(0, "src")
import monoflow as mf

for m in (1.0, -1.0, 3.0, 5.0):
    t0 = time.time()
    try:
        c = mf.chern_oracle_even(4, m)
        print(f"d4 m={m:+.1f}  C2 = {c:+d}   {time.time()-t0:.1f} s", flush=True)
    except Exception as e:
        print(f"d4 m={m:+.1f}  {type(e).__name__}: {e}   {time.time()-t0:.1f} s", flush=True)
