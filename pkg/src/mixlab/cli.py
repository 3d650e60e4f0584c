"""Command-line entry point: ``mixlab <subcommand> [options]``.

Every run resolves its options as defaults < ``--config`` file < explicit
flags, stores the resolved config next to ``record.json`` and CSV tables,
and exits 0 on success, 2 when a mathematical check fails and 1 on usage or
engineering errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path


from . import __version__, measures
from .experiments import (
    ExperimentRecord,
    comparison_pipeline,
    dumps,
    exact_mixing_time,
    lsi_lower_bound,
    t_cyc_estimate,
    tv_lower_bound,
)
from .forms import (
    aldous_check,
    ex_form,
    ip_form,
    lumping_check,
    octopus_certificates,
    psd_dominates,
    rw_form,
    spectral_gap,
)
from .graphs import CapExceeded, complete_graph, connected_graphs, parse_graph
from .paths import (
    congestion,
    final_comparison_certificate,
    hamming_reduction_certificate,
    lift_family,
    proof_chain,
    spanning_tree_family,
)
from .processes import default_workers, run_replicas, simulate_ex, simulate_ip, simulate_rw

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2

LEMMAS = ("octopus", "aldous", "lumping", "canonical-paths", "hamming-reduction", "final-comparison", "proof-chain")
EXPERIMENTS = ("tmix", "tv-bound", "t-cyc", "lsi", "pipeline")

# defaults per subcommand; every flag is parsed with default None so a config file can fill gaps
DEFAULTS = {
    "common": {"seed": 0, "workers": None, "out": "runs"},
    "graph": {"graph": None, "catalog": None},
    "measure": {"kind": "rho", "group": "n=2,l=2", "k": 1, "t": None, "method": "auto"},
    "spectral": {"graph": None, "form": "rw", "k": 1},
    "certify": {"lemma": None, "group": "n=2,l=2", "graph": None, "samples": 50, "k": 1, "radial": True, "max_vertices": 5, "rel_tol": 1e-8},
    "congestion": {"graph": None, "target": None, "lift": False},
    "simulate": {"process": "ip", "graph": None, "t": 1.0, "replicas": 1000, "subset": None, "x0": 0, "mode": "direct"},
    "experiment": {
        "name": None,
        "graph": None,
        "group": None,
        "epsilon": math.exp(-1),
        "t": None,
        "replicas": None,
        "grid": None,
        "bins": 64,
        "delta": 0.05,
        "k": 2,
        "trials": 20,
    },
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    subcommand: str
    params: dict
    seed: int
    workers: int
    out: str
    tolerances: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"subcommand": self.subcommand, "seed": self.seed, **self.params}


def _parse_group(text: str) -> tuple[int, int]:
    try:
        kv = dict(part.split("=") for part in text.replace(" ", "").split(","))
        return int(kv["n"]), int(kv.get("l", kv.get("ell")))
    except Exception as exc:
        raise UsageError(f"bad group spec {text!r}; expected 'n=<int>,l=<int>'") from exc


def _graph(spec):
    if spec is None:
        raise UsageError("--graph is required")
    try:
        return parse_graph(spec)
    except CapExceeded:
        raise
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _spectral_cached(spec: str, form: str, k: int) -> dict:
    """Spectral gap with optional memoization in ``$MIXLAB_CACHE``."""
    cache = os.environ.get("MIXLAB_CACHE")
    key = hashlib.sha256(json.dumps([__version__, spec, form, k]).encode()).hexdigest()[:24]
    path = Path(cache) / f"spectral-{key}.json" if cache else None
    if path is not None and path.exists():
        return json.loads(path.read_text(encoding="utf-8"))
    G = _graph(spec)
    Q = {"rw": lambda: rw_form(G), "ip": lambda: ip_form(G), "ex": lambda: ex_form(G, k)}[form]()
    rep = spectral_gap(Q)
    out = {"graph": spec, "form": form, "states": Q.size, "gap": rep.gap, "trel": rep.trel, "method": rep.method}
    if form == "ex":
        out["k"] = k
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps(out), encoding="utf-8")
    return out


# ----------------------------------------------------------------- handlers


def cmd_graph(cfg: RunConfig) -> tuple[dict, dict, bool]:
    p = cfg.params
    if p["catalog"] is not None:
        graphs = connected_graphs(int(p["catalog"]))
        rows = [(i, G.edge_count, json.dumps(G.edge_list())) for i, G in enumerate(graphs)]
        return {"vertices": int(p["catalog"]), "count": len(graphs)}, {"catalog": (("index", "edges", "edge_list"), rows)}, True
    G = _graph(p["graph"])
    out = {
        "name": G.name,
        "vertices": G.vertex_count,
        "edges": G.edge_count,
        "connected": G.is_connected(),
        "degrees": G.degrees().tolist(),
        "graph": G.to_dict(),
    }
    return out, {"edges": (("u", "v"), G.edge_list())}, True


def cmd_measure(cfg: RunConfig) -> tuple[dict, dict, bool]:
    p = cfg.params
    n, ell = _parse_group(p["group"])
    kind = p["kind"]
    prm = measures.convolution_params(n, ell)
    if kind == "rho":
        mu = measures.rho(n, ell, int(p["k"]))
    elif kind == "pi":
        mu = measures.pi(n, ell)
    elif kind == "uniform-nonzero":
        mu = measures.uniform_nonzero(n, ell)
    elif kind == "mu":
        mu = measures.mu_base(n, ell)[0]
    elif kind == "mu-power":
        t = int(p["t"]) if p["t"] is not None else prm.t
        mu = measures.power_convolve(measures.mu_base(n, ell)[0], t, method=p["method"])
    elif kind in ("rho-I", "rho-J"):
        spec = (measures.interval_I if kind == "rho-I" else measures.interval_J)(n, prm.p)
        mu = measures.rho_interval(n, ell, spec)
    elif kind == "support-law":
        law = measures.support_size_distribution(n, ell, prm.t, prm.theta)
        mu = measures.RadialMeasure(n, ell, law / law.sum())
    else:
        raise UsageError(f"unknown measure kind {kind!r}")
    w = mu.class_weights
    sizes = measures.sphere_sizes(n, ell)
    out = {"kind": kind, "n": n, "ell": ell, "class_weights": w.tolist(), "t": prm.t, "theta": prm.theta}
    rows = [(k, sizes[k], float(w[k])) for k in range(n + 1)]
    return out, {"class_weights": (("k", "sphere_size", "weight"), rows)}, True


def cmd_spectral(cfg: RunConfig) -> tuple[dict, dict, bool]:
    p = cfg.params
    return _spectral_cached(p["graph"], p["form"], int(p["k"])), {}, True


def cmd_certify(cfg: RunConfig) -> tuple[dict, dict, bool]:
    p = cfg.params
    lemma = p["lemma"]
    tol = float(p["rel_tol"])
    if lemma not in LEMMAS:
        raise UsageError(f"--lemma must be one of {', '.join(LEMMAS)}")
    if lemma == "octopus":
        n, ell = _parse_group(p["group"])
        certs = octopus_certificates(n, ell, int(p["samples"]), cfg.seed, radial=bool(p["radial"]), rel_tol=tol)
        dicts = [c.to_dict(timing=False) for c in certs]
        rows = [(d["extra"]["sample"], d["constant_c"], d["min_eig"], d["tol"], d["passed"]) for d in dicts]
        ok = all(d["passed"] for d in dicts)
        return {"lemma": lemma, "passed": ok, "certificates": dicts}, {"certificates": (("sample", "c", "min_eig", "tol", "passed"), rows)}, ok
    if lemma == "aldous":
        graphs = [_graph(p["graph"])] if p["graph"] else connected_graphs(int(p["max_vertices"]))
        reps = [aldous_check(G) for G in graphs]
        rows = [(i, r["gap_ip"], r["gap_rw"], r["abs_diff"], r["passed"]) for i, r in enumerate(reps)]
        ok = all(r["passed"] for r in reps)
        return {"lemma": lemma, "passed": ok, "checked": len(reps)}, {"aldous": (("index", "gap_ip", "gap_rw", "abs_diff", "passed"), rows)}, ok
    if lemma == "lumping":
        r = lumping_check(_graph(p["graph"]), int(p["k"]))
        return {"lemma": lemma, **r}, {}, r["passed"]
    if lemma == "canonical-paths":
        G = _graph(p["graph"])
        fam = spanning_tree_family(G)
        kap = congestion(fam).kappa
        K = complete_graph(G.vertex_count)
        rw = psd_dominates(rw_form(K), rw_form(G), kap, "canonical_paths_rw", tol)
        out = {"lemma": lemma, "kappa": kap, "bound": G.vertex_count**3 / 4, "rw": rw.to_dict(timing=False)}
        ok = rw.passed and kap <= G.vertex_count**3 / 4
        if math.factorial(G.vertex_count) <= 45_000:
            ip = psd_dominates(ip_form(K), ip_form(G), 4 * kap, "canonical_paths_ip", tol)
            out["ip"] = ip.to_dict(timing=False)
            out["kappa_ip"] = congestion(lift_family(fam)).kappa
            ok = ok and ip.passed
        out["passed"] = ok
        return out, {}, ok
    if lemma == "hamming-reduction":
        r = hamming_reduction_certificate(_graph(p["graph"]), rel_tol=tol)
        return r, {}, r["passed"]
    n, ell = _parse_group(p["group"])
    if lemma == "final-comparison":
        r = final_comparison_certificate(n, ell, rel_tol=tol)
        rows = [(c["extra"]["i"], c["extra"]["j"], c["extra"]["coef_i"], c["extra"]["coef_j"], c["min_eig"], c["tol"], c["passed"]) for c in r["certificates"]]
        return r, {"pairs": (("i", "j", "coef_i", "coef_j", "min_eig", "tol", "passed"), rows)}, r["passed"]
    r = proof_chain(n, ell)
    ok = r["c4_le_2n"] and all(
        r["exact_links"][k] <= r["links"][k] * (1 + 1e-9) for k in r.get("exact_links", {})
    )
    r["passed"] = bool(ok)
    return r, {}, ok


def cmd_congestion(cfg: RunConfig) -> tuple[dict, dict, bool]:
    p = cfg.params
    G = _graph(p["graph"])
    H = _graph(p["target"]) if p["target"] else complete_graph(G.vertex_count)
    fam = spanning_tree_family(G, H)
    rep = congestion(lift_family(fam) if p["lift"] else fam)
    family_id = f"tree:{p['graph']}->{p['target'] or 'complete'}" + (":ip" if p["lift"] else "")
    out = {"family_id": family_id, "kappa": rep.kappa, "mode": rep.mode, "argmax": str(rep.argmax), "std_err": rep.std_err}
    loads = sorted((str(k), v) for k, v in rep.loads.items())
    tables = {
        "congestion": (("family_id", "mode", "kappa", "argmax", "std_err"), [(family_id, rep.mode, rep.kappa, str(rep.argmax), rep.std_err)]),
        "loads": (("edge", "load"), loads),
    }
    return out, tables, True


def _ip_key(G, t_end, seed, replica):
    return tuple(simulate_ip(G, t_end, seed, replica).images.tolist())


def _ex_key(G, S0, t_end, seed, replica, mode):
    return tuple(sorted(simulate_ex(G, S0, t_end, seed, mode=mode, replica=replica)))


def _rw_key(G, x0, t_end, seed, replica):
    return simulate_rw(G, x0, t_end, seed, replica)


def cmd_simulate(cfg: RunConfig) -> tuple[dict, dict, bool]:
    p = cfg.params
    G = _graph(p["graph"])
    t = float(p["t"])
    reps = int(p["replicas"])
    proc = p["process"]
    if proc == "ip":
        res = run_replicas(_ip_key, reps, cfg.seed, cfg.workers, G=G, t_end=t)
    elif proc == "ex":
        S0 = [int(x) for x in str(p["subset"] or "0").split(",")]
        res = run_replicas(_ex_key, reps, cfg.seed, cfg.workers, G=G, S0=S0, t_end=t, mode=p["mode"])
    elif proc == "rw":
        res = run_replicas(_rw_key, reps, cfg.seed, cfg.workers, G=G, x0=int(p["x0"]), t_end=t)
    else:
        raise UsageError(f"unknown process {proc!r}")
    counts: dict = {}
    for r in res:
        counts[r] = counts.get(r, 0) + 1
    rows = sorted((json.dumps(k) if not isinstance(k, int) else k, c, c / reps) for k, c in counts.items())
    out = {"process": proc, "t": t, "replicas": reps, "distinct_states": len(counts)}
    return out, {"states": (("state", "count", "frequency"), rows)}, True


def cmd_experiment(cfg: RunConfig) -> tuple[dict, dict, bool]:
    p = cfg.params
    name = p["name"]
    if name not in EXPERIMENTS:
        raise UsageError(f"experiment must be one of {', '.join(EXPERIMENTS)}")
    if name == "tmix":
        G = _graph(p["graph"])
        t = exact_mixing_time(G, float(p["epsilon"]))
        return {"tmix": t, "epsilon": float(p["epsilon"]), "vertices": G.vertex_count}, {}, True
    if name == "tv-bound":
        G = _graph(p["graph"])
        r = tv_lower_bound(G, float(p["t"] or 0.0), replicas=int(p["replicas"] or 10_000), seed=cfg.seed, bins=int(p["bins"]), delta=float(p["delta"]), workers=cfg.workers)
        return r, {}, True
    if name == "t-cyc":
        G = _graph(p["graph"])
        grid = None if p["grid"] is None else [float(x) for x in str(p["grid"]).split(",")]
        r = t_cyc_estimate(G, grid, replicas=int(p["replicas"] or 200), seed=cfg.seed, workers=cfg.workers)
        out = {"t_cyc": r.t_cyc, "censored": r.censored, "t_lower": r.t_lower, "t_upper": r.t_upper, "replicas": r.replicas}
        return out, {"t_cyc": (r.columns, r.rows())}, True
    if name == "lsi":
        G = _graph(p["graph"])
        k = int(p["k"])
        r = lsi_lower_bound(ex_form(G, k), trials=int(p["trials"]), seed=cfg.seed, G=G, k=k)
        d = r.to_dict()
        ok = d["lower_bound"] >= d["sandwich_lower"] * (1 - 1e-9) and d["lower_bound"] <= d["sandwich_upper"] * (1 + 1e-9)
        d["passed"] = bool(ok)
        return d, {}, ok
    n, ell = _parse_group(p["group"] or "n=2,l=2")
    G = _graph(p["graph"]) if p["graph"] else None
    r = comparison_pipeline(n, ell, G)
    r.pop("wall_time", None)
    ok = r.get("consistent", True)
    return r, {}, ok


HANDLERS = {
    "graph": cmd_graph,
    "measure": cmd_measure,
    "spectral": cmd_spectral,
    "certify": cmd_certify,
    "congestion": cmd_congestion,
    "simulate": cmd_simulate,
    "experiment": cmd_experiment,
}


# ----------------------------------------------------------------- parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option values; explicit flags win")
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--workers", type=int, help="replica worker processes (default: available CPUs)")
    common.add_argument("--out", help="results root directory (default runs); 'none' disables saving")

    parser = _Parser(
        prog="mixlab",
        description="Interchange-process comparison toolkit.",
        epilog=(
            "Exit codes: 0 success, 1 usage or cap error, 2 a certificate did not pass. "
            "Runs are saved under <out>/<timestamp>-<id>/ as config.json, record.json, "
            "timing.json and tables/*.csv; replay one with --config <run>/config.json. "
            "Set MIXLAB_CACHE to a directory to memoize spectral results."
        ),
    )
    parser.add_argument("--version", action="version", version=f"mixlab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    g = sub.add_parser("graph", parents=[common], help="build and describe a graph")
    g.add_argument("--graph", help="graph spec, e.g. 'hamming:n=3,l=2', 'path:3', 'product:path3 x cycle4'")
    g.add_argument("--catalog", type=int, help="list all connected graphs on this many vertices (<= 7)")

    m = sub.add_parser("measure", parents=[common], help="radial measures on Z_l^n")
    m.add_argument("--kind", help="rho | pi | uniform-nonzero | mu | mu-power | rho-I | rho-J | support-law")
    m.add_argument("--group", help="'n=<int>,l=<int>'")
    m.add_argument("--k", type=int, help="sphere index for --kind rho")
    m.add_argument("--t", type=int, help="convolution power for mu-power (default 2^ceil(log2 n))")
    m.add_argument("--method", help="auto | krawtchouk | intersection")

    s = sub.add_parser("spectral", parents=[common], help="spectral gap of a form")
    s.add_argument("--graph")
    s.add_argument("--form", choices=["rw", "ip", "ex"])
    s.add_argument("--k", type=int, help="particle count for --form ex")

    c = sub.add_parser("certify", parents=[common], help="run a certificate; exit 2 if it fails")
    c.add_argument("--lemma", help=" | ".join(LEMMAS))
    c.add_argument("--group", help="'n=<int>,l=<int>' for group-based lemmas")
    c.add_argument("--graph")
    c.add_argument("--samples", type=int, help="random measures for octopus")
    c.add_argument("--k", type=int, help="subset size for lumping")
    c.add_argument("--radial", type=_bool, nargs="?", const=True, help="octopus: radial (true) or general symmetric (false) measures")
    c.add_argument("--max-vertices", dest="max_vertices", type=int, help="aldous: catalog size when --graph is absent")
    c.add_argument("--rel-tol", dest="rel_tol", type=float, help="relative PSD tolerance (default 1e-8)")

    k = sub.add_parser("congestion", parents=[common], help="spanning-tree congestion")
    k.add_argument("--graph")
    k.add_argument("--target", help="target graph (default: complete graph)")
    k.add_argument("--lift", type=_bool, nargs="?", const=True, help="report the interchange-level (lifted word) congestion")

    sm = sub.add_parser("simulate", parents=[common], help="Monte Carlo simulation")
    sm.add_argument("--process", choices=["ip", "ex", "rw"])
    sm.add_argument("--graph")
    sm.add_argument("--t", type=float)
    sm.add_argument("--replicas", type=int)
    sm.add_argument("--subset", help="comma-separated initial subset for ex")
    sm.add_argument("--x0", type=int, help="start vertex for rw")
    sm.add_argument("--mode", choices=["direct", "projected"])

    e = sub.add_parser("experiment", parents=[common], help="tmix | tv-bound | t-cyc | lsi | pipeline")
    e.add_argument("name", nargs="?", help=" | ".join(EXPERIMENTS))
    e.add_argument("--graph")
    e.add_argument("--group", help="pipeline: 'n=<int>,l=<int>'")
    e.add_argument("--epsilon", type=float)
    e.add_argument("--t", type=float)
    e.add_argument("--replicas", type=int)
    e.add_argument("--grid", help="comma-separated time grid for t-cyc")
    e.add_argument("--bins", type=int)
    e.add_argument("--delta", type=float)
    e.add_argument("--k", type=int)
    e.add_argument("--trials", type=int)
    return parser


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def resolve(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, the optional config file and explicit flags."""
    sub = args.subcommand
    file_cfg = {}
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if file_cfg.get("subcommand", sub) != sub:
            raise UsageError(f"config is for {file_cfg['subcommand']!r}, not {sub!r}")
    merged = {}
    for key, default in {**DEFAULTS["common"], **DEFAULTS[sub]}.items():
        flag = getattr(args, key, None)
        merged[key] = flag if flag is not None else file_cfg.get(key, default)
    unknown = set(file_cfg) - set(merged) - {"subcommand"}
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    seed = int(merged.pop("seed"))
    workers = merged.pop("workers")
    out = merged.pop("out")
    workers = int(workers) if workers is not None else default_workers()
    return RunConfig(sub, merged, seed, workers, out)


def run(cfg: RunConfig) -> tuple[ExperimentRecord, bool]:
    start = time.perf_counter()
    outputs, tables, ok = HANDLERS[cfg.subcommand](cfg)
    name = cfg.params.get("name") or cfg.params.get("lemma") or ""
    exp_id = cfg.subcommand + (f"-{name}" if name else "")
    rec = ExperimentRecord(exp_id, cfg.to_dict(), cfg.seed, outputs, tables, cfg.tolerances)
    rec.wall_time = time.perf_counter() - start
    return rec, ok


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        rec, ok = run(cfg)
    except UsageError as exc:
        print(f"mixlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapExceeded as exc:
        print(f"mixlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError) as exc:
        print(f"mixlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if str(cfg.out).lower() != "none":
        run_dir = rec.save(cfg.out)
        print(f"mixlab: wrote {run_dir}", file=sys.stderr)
    print(dumps(rec.record_dict()["outputs"]))
    return EXIT_OK if ok else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
