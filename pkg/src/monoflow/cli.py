"""Experiment runner.

Parses a declarative JSON config (or a shipped preset), builds the box,
model, and paths, runs the requested tasks, and writes a machine-readable
report plus eigenvalue-trajectory CSV files.  Reports are deterministic:
the same config and seed reproduce the same values, and trajectory CSV
files are byte-identical across reruns.

Heavy imports happen inside functions so that --threads can pin the BLAS
thread count before numpy is first loaded (via re-exec when needed).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass

REPORT_SCHEMA = "monoflow-report/1"
_THREAD_VARS = ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                "MKL_NUM_THREADS")

_KINDS = ("ssh", "even_dirac", "odd_chiral", "harness")
_TASKS = ("spectral_flow", "index", "oracle", "invariant_suite")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    model: dict
    box: dict | None
    alpha_grid: dict
    tasks: list
    seed: int
    output_dir: str

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        unknown = set(raw) - {"model", "box", "alpha_grid", "tasks", "seed",
                              "output_dir", "_description"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        model = dict(raw.get("model") or {})
        kind = model.get("kind")
        if kind not in _KINDS:
            raise ConfigError(f"model.kind must be one of {_KINDS}, "
                              f"got {kind!r}")
        box = raw.get("box")
        if kind == "harness":
            box = None
        else:
            if not isinstance(box, dict):
                raise ConfigError("box is required for lattice models")
            for key in ("d", "radius", "offset"):
                if key not in box:
                    raise ConfigError(f"box.{key} is required")
            if len(box["offset"]) != box["d"]:
                raise ConfigError("box.offset length must equal box.d")
        grid = dict(raw.get("alpha_grid") or {})
        grid.setdefault("points", 51)
        grid.setdefault("refine_tol", 1e-4)
        if int(grid["points"]) < 2:
            raise ConfigError("alpha_grid.points must be at least 2")
        tasks = list(raw.get("tasks") or [])
        bad = [t for t in tasks if t not in _TASKS]
        if bad or not tasks:
            raise ConfigError(f"tasks must be a non-empty subset of "
                              f"{_TASKS}, got {tasks}")
        if kind == "even_dirac" and model.get("path", "half") not in \
                ("half", "full"):
            raise ConfigError("even_dirac model.path must be half or full")
        if kind in ("even_dirac", "odd_chiral") and "mass" not in model:
            raise ConfigError(f"{kind} requires model.mass")
        return cls(model=model, box=dict(box) if box else None,
                   alpha_grid=grid, tasks=tasks,
                   seed=int(raw.get("seed", 0)),
                   output_dir=str(raw.get("output_dir", "runs/out")))

    def to_dict(self) -> dict:
        return {"model": self.model, "box": self.box,
                "alpha_grid": self.alpha_grid, "tasks": self.tasks,
                "seed": self.seed, "output_dir": self.output_dir}


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of the experiment content; output_dir is plumbing, not
    experiment identity, and is excluded."""
    payload = cfg.to_dict()
    payload.pop("output_dir")
    blob = json.dumps(payload, sort_keys=True,
                      separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _plain(x):
    """Strip numpy scalar/array types for JSON output."""
    import numpy as np
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    return x


def _flow_entry(res) -> dict:
    diag = {k: v for k, v in res.diagnostics.items()
            if k != "boundary_crossings"}
    entry = {
        "net_flow": int(res.net_flow),
        "mode": res.mode,
        "crossings": [{"alpha": c.alpha, "direction": c.direction,
                       "track": c.track, "bulk": c.bulk}
                      for c in res.crossings],
        "boundary_crossings": [
            {"alpha": c.alpha, "direction": c.direction,
             "track": c.track, "bulk": c.bulk}
            for c in res.diagnostics.get("boundary_crossings", [])],
        "net_flow_all": int(res.net_flow_all()),
        "diagnostics": diag,
    }
    return _plain(entry)


def _index_entry(res) -> dict:
    return _plain({"value": res.value, "method": res.method,
                   "raw": res.raw, "stability": res.stability,
                   "stable": res.stable, "extra": res.extra})


def _make_box(cfg: ExperimentConfig):
    import monoflow as mf
    b = cfg.box
    return mf.make_box(int(b["d"]), b["radius"],
                       offset=tuple(float(o) for o in b["offset"]),
                       fiber_dim=1)


def _run_ssh(cfg, grid, out):
    import numpy as np
    import monoflow as mf
    box = _make_box(cfg)
    H, S1, F = mf.build_ssh(box, 1.0)
    _, S0, _ = mf.build_ssh(box, 0.0)

    def at(a):
        _, Sa, _ = mf.build_ssh(box, a)
        return F @ Sa @ S0.conj().T

    flows = {}
    if "spectral_flow" in cfg.tasks:
        res = mf.sf_unitary(at, F, grid=grid, box=box, capture="values",
                            refine_tol=cfg.alpha_grid["refine_tol"])
        out["results"]["flow"] = {"dressed_shift": _flow_entry(res)}
        flows["dressed_shift"] = res
    if "index" in cfg.tasks:
        ind = mf.kernel_count(mf.hardy_projection(F), S0, box)
        out["results"]["index"] = _index_entry(ind)
        if "spectral_flow" in cfg.tasks:
            out["verdicts"].append(_verdict(
                "SF == Ind", flows["dressed_shift"].net_flow, ind.value))
    if "oracle" in cfg.tasks:
        _oracle_value(lambda: mf.winding_oracle_odd(
            mf.ModelSpec(kind="ssh", d=1, mass=0.0)), out)
    return flows


def _run_even(cfg, grid, out):
    import numpy as np
    import monoflow as mf
    box = _make_box(cfg)
    mass = float(cfg.model["mass"])
    model = mf.EvenDiracModel(box, mass,
                              fermi_level=float(cfg.model.get(
                                  "fermi_level", 0.0)))
    sweep = mf.CacheSweep(model.gamma, box)
    mu = model.fermi_level
    rt = cfg.alpha_grid["refine_tol"]
    flows = {}

    if "spectral_flow" in cfg.tasks:
        if cfg.model.get("path", "half") == "full":
            up = mf.sf_selfadjoint(model.half_path(grid, sweep), mu=mu,
                                   capture="values", refine_tol=rt)
            lo = mf.sf_selfadjoint(model.half_path(grid, sweep, lower=True),
                                   mu=mu, capture="values", refine_tol=rt)
            out["results"]["flow"] = {"upper_block": _flow_entry(up),
                                      "lower_block": _flow_entry(lo)}
            flows = {"upper_block": up, "lower_block": lo}
            net = up.net_flow_all() + lo.net_flow_all()
            out["results"]["full_net_flow"] = int(net)
            out["verdicts"].append(_verdict("net flow == 0", net, 0))
        else:
            res = mf.sf_selfadjoint(model.half_path(grid, sweep), mu=mu,
                                    capture="values", refine_tol=rt)
            out["results"]["flow"] = {"h": _flow_entry(res)}
            flows = {"h": res}

    ind = None
    if "index" in cfg.tasks:
        P0 = mf.fermi_projection(model.half_block(sweep.cache(0.0)), mu)
        V = mf.even_flux_unitary(box, fiber=model.nu.fiber_dim)
        ind = mf.fedosov_index(P0, V, box)
        out["results"]["index"] = _index_entry(ind)
        if "h" in flows:
            out["verdicts"].append(_verdict(
                "SF == Ind", flows["h"].net_flow, ind.value))
    if "oracle" in cfg.tasks:
        val = _oracle_value(lambda: mf.chern_oracle_even(model.spec), out)
        if ind is not None and val is not None:
            out["verdicts"].append(_verdict("Ind == oracle", ind.value, val))
    return flows


def _run_odd(cfg, grid, out):
    import numpy as np
    import monoflow as mf
    box = _make_box(cfg)
    mass = float(cfg.model["mass"])
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        model = mf.OddChiralModel(box, mass)
    sweep = mf.CacheSweep(model.gamma, box)
    rt = cfg.alpha_grid["refine_tol"]
    A0 = model.chiral_block(sweep.cache(0.0))
    F0 = model.flux_axis()
    flows = {}
    sf = None

    if "spectral_flow" in cfg.tasks:
        A0inv = np.linalg.inv(A0)
        for name, which in (("block_1", 0), ("block_2", 1)):
            at = lambda a, w=which: model.flow_blocks(
                sweep.cache(a), A0inv, F0)[w]
            flows[name] = mf.sf_nonnormal(at, grid, box=box,
                                          capture="values", refine_tol=rt)
        out["results"]["flow"] = {k: _flow_entry(v) for k, v in flows.items()}
        sf = flows["block_1"].net_flow + flows["block_2"].net_flow
        out["results"]["chirality_flow"] = int(sf)

    ind = None
    if "index" in cfg.tasks:
        ind = mf.fedosov_index(mf.hardy_projection(F0), A0, box)
        out["results"]["index"] = _index_entry(ind)
        if sf is not None:
            out["verdicts"].append(_verdict("SF == 2*Ind", sf, 2 * ind.value))
    if "oracle" in cfg.tasks:
        val = _oracle_value(lambda: mf.winding_oracle_odd(model.spec), out)
        if ind is not None and val is not None:
            out["verdicts"].append(_verdict("Ind == oracle", ind.value, val))
    return flows


def _run_harness(cfg, grid, out):
    import numpy as np
    import monoflow as mf
    trials = int(cfg.model.get("trials", 50))
    dim_max = int(cfg.model.get("dim_max", 24))
    rng = np.random.default_rng(cfg.seed)
    matches = 0
    table = []
    for t in range(trials):
        n = int(rng.integers(2, dim_max + 1))
        U0 = mf.haar_unitary(rng, n)
        F = mf.random_signature_unitary(rng, n)
        at = mf.standard_unitary_path(U0, F)
        res = mf.sf_unitary(at, F, grid=grid, capture="none")
        ind = mf.kernel_count(0.5 * (np.eye(n) - F), U0)
        ok = res.net_flow == ind.value
        matches += ok
        table.append({"trial": t, "dim": n, "sf": int(res.net_flow),
                      "index": int(ind.value), "match": bool(ok)})
    out["results"]["harness"] = {"trials": trials, "matches": matches,
                                 "table": table}
    out["verdicts"].append(_verdict("SF == Ind", matches, trials))
    return {}


def _verdict(name: str, lhs, rhs) -> dict:
    return {"name": name, "lhs": _plain(lhs), "rhs": _plain(rhs),
            "passed": bool(lhs == rhs)}


def _oracle_value(fn, out):
    import monoflow as mf
    try:
        val = int(fn())
        out["results"]["oracle"] = val
        return val
    except mf.GaplessSpectrumError as e:
        out["results"]["oracle"] = {"error": str(e),
                                    "type": "GaplessSpectrumError",
                                    "module": "monoflow.index"}
        out["verdicts"].append({"name": "Ind == oracle", "lhs": None,
                                "rhs": None, "passed": False,
                                "note": "oracle undefined: " + str(e)})
        return None


def run(cfg: ExperimentConfig) -> dict:
    """Execute one experiment and return the report dict."""
    import numpy as np
    import monoflow as mf
    t0 = time.time()
    out = {"schema": REPORT_SCHEMA, "version": mf.__version__,
           "config": cfg.to_dict(), "config_hash": config_hash(cfg),
           "results": {}, "verdicts": []}
    grid = np.linspace(0.0, 1.0, int(cfg.alpha_grid["points"]))
    kind = cfg.model["kind"]
    runner = {"ssh": _run_ssh, "even_dirac": _run_even,
              "odd_chiral": _run_odd, "harness": _run_harness}[kind]
    flows = runner(cfg, grid, out)

    if "invariant_suite" in cfg.tasks:
        box = _make_box(cfg)
        rep = mf.build_clifford(box.d)
        sweep = mf.CacheSweep(rep, box)
        rows = mf.identity_suite(sweep)
        out["results"]["invariants"] = _plain(rows)
        out["verdicts"].append(_verdict(
            "invariant suite", sum(r["passed"] for r in rows), len(rows)))

    out["wall_time_s"] = round(time.time() - t0, 3)
    out["_flows"] = flows  # stripped before writing
    return out


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def emit(report: dict, out_dir: str) -> list:
    """Write report.json and trajectory CSVs; returns written paths."""
    os.makedirs(out_dir, exist_ok=True)
    flows = report.pop("_flows", {})
    written = []
    for name, res in flows.items():
        if res.path is None:
            continue
        path = os.path.join(out_dir, f"trajectories_{name}.csv")
        tmp = path + ".tmp"
        res.path.to_csv(tmp)
        os.replace(tmp, path)
        written.append(path)
    rp = os.path.join(out_dir, "report.json")
    _atomic_write(rp, json.dumps(report, indent=2, sort_keys=True) + "\n")
    written.append(rp)
    return written


def preset_dir():
    from importlib import resources
    return resources.files("monoflow") / "presets"


def load_preset(name: str) -> dict:
    p = preset_dir() / f"{name}.json"
    if not p.is_file():
        names = ", ".join(sorted(q.name[:-5] for q in preset_dir().iterdir()
                                 if q.name.endswith(".json")))
        raise ConfigError(f"no preset {name!r}; available: {names}")
    return json.loads(p.read_text())


def _load_config(args) -> ExperimentConfig:
    if bool(args.config) == bool(args.preset):
        raise ConfigError("exactly one of --config or --preset is required")
    if args.config:
        with open(args.config) as f:
            raw = json.load(f)
    else:
        raw = load_preset(args.preset)
    cfg = ExperimentConfig.from_dict(raw)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.output_dir = args.out
    return cfg


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="monoflow",
        description="spectral flow / index experiments on finite lattices")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb in ("run", "validate"):
        q = sub.add_parser(verb)
        q.add_argument("--config", help="path to a JSON experiment config")
        q.add_argument("--preset", help="name of a shipped preset")
        q.add_argument("--out", help="output directory (overrides config)")
        q.add_argument("--seed", type=int, default=None)
        q.add_argument("--threads", type=int, default=None,
                       help="BLAS thread count (set before numpy loads)")
    sub.add_parser("list-presets")
    return p


def _reexec_for_threads(n: int, argv: list) -> None:
    want = str(n)
    if all(os.environ.get(v) == want for v in _THREAD_VARS):
        return
    for v in _THREAD_VARS:
        os.environ[v] = want
    if "numpy" in sys.modules and os.environ.get("MONOFLOW_REEXEC") != "1":
        os.environ["MONOFLOW_REEXEC"] = "1"
        os.execv(sys.executable,
                 [sys.executable, "-m", "monoflow.cli"] + argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = _parser().parse_args(argv)

    if args.verb == "list-presets":
        for p in sorted(preset_dir().iterdir()):
            if not p.name.endswith(".json"):
                continue
            desc = json.loads(p.read_text()).get("_description", "")
            print(f"{p.name[:-5]:24s} {desc}")
        return 0

    if getattr(args, "threads", None) is not None:
        _reexec_for_threads(args.threads, argv)

    try:
        cfg = _load_config(args)
    except (ConfigError, OSError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    if args.verb == "validate":
        print(f"config ok (hash {config_hash(cfg)})")
        return 0

    report = run(cfg)
    paths = emit(report, cfg.output_dir)
    for v in report["verdicts"]:
        mark = "pass" if v["passed"] else "FAIL"
        print(f"[{mark}] {v['name']}: {v['lhs']} vs {v['rhs']}")
    print(f"report: {paths[-1]}  (hash {report['config_hash']}, "
          f"{report['wall_time_s']} s)")
    return 0 if all(v["passed"] for v in report["verdicts"]) else 1


if __name__ == "__main__":
    sys.exit(main())
