"""Command line front end: ``cladoflow <experiment> [options]``.

Each experiment reads a flat set of parameters, writes a CSV table and a
JSON summary into the output directory, and exits with 0 when every
built-in assertion passes, 2 when one fails and 1 on a usage error.

Configuration comes from an optional JSON file (flat keys: ``experiment``,
``seed``, ``threads``, ``output_dir``, ``output_name`` and the experiment
parameters) and from flags, which take precedence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import random
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .errors import CladoflowError, ParseError, UsageError

log = logging.getLogger("cladoflow")

RESERVED = ("experiment", "seed", "threads", "output_dir", "output_name")


# parameter schemas


@dataclass(frozen=True)
class Param:
    default: object
    check: Callable[[object], bool] = lambda v: True
    help: str = ""


def _int(lo=None, hi=None):
    def ok(v):
        return isinstance(v, int) and not isinstance(v, bool) and (lo is None or v >= lo) and (hi is None or v <= hi)
    return ok


def _num(lo=None):
    def ok(v):
        return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) and (lo is None or v >= lo)
    return ok


def _int_list(lo=None, hi=None):
    item = _int(lo, hi)
    return lambda v: isinstance(v, list) and len(v) > 0 and all(item(x) for x in v)


def _num_list(lo=None):
    item = _num(lo)
    return lambda v: isinstance(v, list) and len(v) > 0 and all(item(x) for x in v)


def _one_of(*opts):
    return lambda v: v in opts


def _start(v):
    return isinstance(v, str) and (v in ("comb", "balanced", "uniform") or Path(v).is_file())


def _bool(v):
    return isinstance(v, bool)


SCHEMAS: dict[str, dict[str, Param]] = {
    "simulate": {
        "N": Param(20, _int(3), "number of leaves"),
        "start": Param("comb", _start, "comb, balanced, uniform or a tree file"),
        "horizon": Param(1.0, _num(0), "simulated time"),
        "record_noops": Param(False, _bool, "also record moves that leave the tree unchanged"),
        "snapshot_every": Param(1024, _int(1), "events between full snapshots"),
    },
    "generator-gap": {
        "m": Param(4, _int(3, 7)),
        "N": Param([8, 16, 32, 64], _int_list(3)),
        "trees_per_N": Param(20, _int(1)),
    },
    "mass-generator-gap": {
        "f": Param("sym_pairs", lambda v: isinstance(v, (str, list))),
        "N": Param([8, 16, 32, 64, 128], _int_list(3)),
        "trees_per_N": Param(20, _int(1)),
        "slope_min": Param(-1.3, _num()),
        "slope_max": Param(-0.7, _num()),
    },
    "crt-moments": {
        "N": Param(1000, _int(3)),
        "m": Param(3, _int(3, 10)),
        "replicates": Param(50000, _int(2)),
        "method": Param("urn", _one_of("urn", "tree")),
        "moment_tol": Param(0.002, _num(0)),
    },
    "qn-table": {
        "N": Param(10, _int(3, 200)),
        "m": Param(3, _int(3, 6)),
        "shape": Param(0, _int(0)),
    },
    "duality": {
        "N": Param([50, 200, 800], _int_list(3)),
        "m": Param(4, _int(3, 6)),
        "shape": Param(0, _int(0)),
        "horizon": Param(1.0, _num(0)),
        "replicates": Param(200, _int(2)),
        "start": Param("comb", _one_of("comb", "balanced", "uniform")),
    },
    "mixing": {
        "N": Param(200, _int(4)),
        "start": Param("comb", _start),
        "m": Param(4, _int(3, 6)),
        "horizons": Param([0.0, 1.0, 2.0, 5.0, 10.0], _num_list(0)),
        "replicates": Param(2000, _int(2)),
        "z_max": Param(3.0, _num(0)),
    },
    "identities": {
        "N_max": Param(64, _int(4)),
        "cases": Param(1000, _int(1)),
    },
    "distance-matrix": {
        "N": Param(50, _int(3)),
        "start": Param("uniform", _start),
        "m": Param(4, _int(2, 12)),
        "samples": Param(1000, _int(1)),
    },
}


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict
    seed: int
    threads: int
    output_dir: str = "cladoflow-out"
    output_name: str | None = None
    conflicts: list = field(default_factory=list)

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("conflicts")
        return d


def _value(text: str):
    """Parse a flag value as JSON, falling back to the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _default_threads() -> int:
    env = os.environ.get("CLADOFLOW_THREADS")
    if env:
        try:
            k = int(env)
        except ValueError:
            raise ParseError(f"CLADOFLOW_THREADS={env!r} is not an integer", key="threads") from None
        if k >= 1:
            return k
    return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cladoflow", description="Experiments on the leaf-move chain on cladograms.")
    p.add_argument("experiment", nargs="?", help="one of: " + ", ".join(SCHEMAS))
    p.add_argument("--config", help="JSON config file with flat keys")
    p.add_argument("--seed", type=int, help="64-bit master seed")
    p.add_argument("--threads", type=int, help="worker threads (default: CLADOFLOW_THREADS or all cores)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--name", help="output file stem (default: experiment and timestamp)")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="experiment parameter, value parsed as JSON when possible")
    p.add_argument("--version", action="version", version=f"cladoflow {__version__}")
    return p


def parse_config(argv=None, text: str | None = None) -> ExperimentConfig:
    """Build a validated :class:`ExperimentConfig` from flags and an optional JSON config.

    Parameters
    ----------
    argv : list of str, optional
        Command line arguments (without the program name).
    text : str, optional
        JSON config text; used instead of ``--config``.

    Raises
    ------
    ParseError
        Malformed config or an invalid parameter (``key`` names it).
    UsageError
        Unknown experiment or parameter.
    """
    ns = build_parser().parse_args([] if argv is None else list(argv))
    file_cfg: dict = {}
    if ns.config is not None:
        text = Path(ns.config).read_text(encoding="utf-8")
    if text is not None:
        try:
            file_cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"config is not valid JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from exc
        if not isinstance(file_cfg, dict):
            raise ParseError("config must be a JSON object")

    flag_cfg: dict = {}
    if ns.experiment is not None:
        flag_cfg["experiment"] = ns.experiment
    for key, val in (("seed", ns.seed), ("threads", ns.threads), ("output_dir", ns.out),
                     ("output_name", ns.name)):
        if val is not None:
            flag_cfg[key] = val
    for item in ns.param:
        if "=" not in item:
            raise ParseError(f"--param expects KEY=VALUE, got {item!r}", key=item)
        k, v = item.split("=", 1)
        flag_cfg[k.strip()] = _value(v)

    conflicts = []
    merged = dict(file_cfg)
    for k, v in flag_cfg.items():
        if k in file_cfg and file_cfg[k] != v:
            conflicts.append({"key": k, "file": file_cfg[k], "flag": v})
            log.warning("flag overrides config file for %s: %r -> %r", k, file_cfg[k], v)
        merged[k] = v

    exp = merged.get("experiment")
    if exp is None:
        raise UsageError("no experiment given; choose one of " + ", ".join(SCHEMAS))
    if exp not in SCHEMAS:
        raise UsageError(f"unknown experiment {exp!r}; choose one of " + ", ".join(SCHEMAS))
    schema = SCHEMAS[exp]
    params = {}
    for k, v in merged.items():
        if k in RESERVED:
            continue
        if k not in schema:
            raise UsageError(f"unknown parameter {k!r} for {exp}; known: {', '.join(schema)}")
        params[k] = v
    for k, spec in schema.items():
        params.setdefault(k, spec.default)
        if isinstance(params[k], int) and isinstance(spec.default, float) and not isinstance(params[k], bool):
            params[k] = float(params[k])
        if not spec.check(params[k]):
            raise ParseError(f"invalid value {params[k]!r} for {k}", key=k)

    seed = merged.get("seed")
    if seed is None:
        seed = int(np.random.SeedSequence().entropy) & 0xFFFFFFFFFFFFFFFF
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ParseError(f"seed must be an integer in [0, 2**64), got {seed!r}", key="seed")
    threads = merged.get("threads", None)
    if threads is None:
        threads = _default_threads()
    if not isinstance(threads, int) or threads < 1:
        raise ParseError(f"threads must be a positive integer, got {threads!r}", key="threads")
    out = merged.get("output_dir", "cladoflow-out")
    name = merged.get("output_name")
    return ExperimentConfig(exp, params, seed, threads, str(out), name, conflicts)


# experiments; each returns (header, rows, metrics, assertions)


def _fmt(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _start_tree(spec, n, g):
    from .serialize import load
    from .tree import start_tree
    if spec in ("comb", "balanced", "uniform"):
        return start_tree(spec, n, g)
    return load(spec)


def _check(name, passed, detail=""):
    return {"name": name, "pass": bool(passed), "detail": detail}


def exp_simulate(p, g):
    from .chain import simulate
    from .serialize import to_newick
    t0 = _start_tree(p["start"], p["N"], g)
    traj = simulate(t0, p["horizon"], g, record_noops=p["record_noops"], snapshot_every=p["snapshot_every"])
    rows = [[repr(tm), mv.leaf, mv.edge[0], mv.edge[1]] for tm, mv in zip(traj.times, traj.moves)]
    final = traj.final
    metrics = {"events": len(traj), "initial": to_newick(t0), "final": to_newick(final),
               "trajectory_jsonl": traj.to_jsonl()}
    return ["t", "leaf", "edge_a", "edge_b"], rows, metrics, [
        _check("final state is a valid cladogram", final.n_leaves == t0.n_leaves)]


def exp_generator_gap(p, g):
    from .shape_poly import generator_gap
    rows = generator_gap(p["N"], p["m"], trees_per_N=p["trees_per_N"], rng=g)
    header = ["N", "m", "shape_key", "gap", "mean_gap", "bound", "pass"]
    body = [[r[k] for k in header] for r in rows]
    bad = sum(not r["pass"] for r in rows)
    return header, body, {"violations": bad, "rows": len(rows)}, [
        _check("gap <= 7m(m-1)/N on every row", bad == 0, f"{bad} violations")]


def loglog_slope(ns, gaps) -> float:
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(gaps, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def mass_generator_gaps(ns, f, trees_per_N, g) -> list[dict]:
    from .mass_poly import get_mass_function, omega_ald_mass, omega_N_mass
    from .tree import uniform_cladogram
    f = get_mass_function(f)
    rows = []
    for n in ns:
        gaps = []
        for _ in range(trees_per_N):
            t = uniform_cladogram(n, g)
            gaps.append(abs(omega_N_mass(t, f) - omega_ald_mass(t, f)))
        rows.append({"N": n, "max_gap": max(gaps), "mean_gap": sum(gaps) / len(gaps)})
    return rows


def exp_mass_generator_gap(p, g):
    rows = mass_generator_gaps(p["N"], p["f"], p["trees_per_N"], g)
    slope = loglog_slope([r["N"] for r in rows], [r["max_gap"] for r in rows]) if len(rows) > 1 else float("nan")
    dec = all(b["max_gap"] <= a["max_gap"] for a, b in zip(rows, rows[1:]))
    header = ["N", "max_gap", "mean_gap"]
    return header, [[r[k] for k in header] for r in rows], {"slope": slope, "decreasing": dec}, [
        _check("max gap decreases in N", dec),
        _check("log-log slope in range", p["slope_min"] <= slope <= p["slope_max"],
               f"slope {slope:.4f}, range [{p['slope_min']}, {p['slope_max']}]")]


def exp_crt_moments(p, g):
    from .crt_stats import subtree_mass_histogram
    s = subtree_mass_histogram(p["N"], p["m"], p["replicates"], g, p["method"])
    rows = [["".join(map(str, k)), v] for k, v in s.moment_errors.items()]
    metrics = {"mean_pair": s.mean_pair, "pair_target": str(s.pair_target), "pair_se": s.pair_se,
               "ks": s.ks, "ks_raw": s.ks_raw, "ks_critical": s.ks_critical,
               "chi2": s.chi2, "chi2_df": s.chi2_df, "chi2_p": s.chi2_p}
    dev = abs(s.mean_pair - float(s.pair_target))
    return ["exponents", "empirical_minus_target"], rows, metrics, [
        _check("|E[eta1 eta2] - target| < tol", dev < p["moment_tol"], f"deviation {dev:.6f}"),
        _check("KS below 0.1% critical value", s.ks < s.ks_critical, f"{s.ks:.5f} vs {s.ks_critical:.5f}")]


def exp_qn_table(p, g):
    from .crt_stats import enumerate_profiles, q_N_exact
    from .shapes import enumerate_cladograms
    from .tree import count_cladograms
    shapes = enumerate_cladograms(p["m"])
    if p["shape"] >= len(shapes):
        raise ParseError(f"shape index {p['shape']} out of range 0..{len(shapes) - 1}", key="shape")
    if p["N"] < p["m"]:
        raise ParseError("N must be >= m", key="N")
    s = shapes[p["shape"]]
    splits = s.splits()
    rows, total = [], Fraction(0)
    for prof in enumerate_profiles(p["N"], s):
        q = q_N_exact(p["N"], s, prof)
        total += q
        rows.append(list(prof) + [q, float(q)])
    header = ["n_" + "".join(map(str, sorted(sp))) for sp in splits] + ["q", "q_float"]
    target = Fraction(1, count_cladograms(p["m"]))
    return header, rows, {"shape": s.canonical_key.decode(), "total": str(total)}, [
        _check("profiles sum to 1/#Clad_m", total == target, f"{total} vs {target}")]


def exp_duality(p, g):
    from .crt_stats import duality_check
    from .shapes import enumerate_cladograms
    from .tree import start_tree
    shapes = enumerate_cladograms(p["m"])
    if p["shape"] >= len(shapes):
        raise ParseError(f"shape index {p['shape']} out of range", key="shape")
    s = shapes[p["shape"]]
    reports, zero = [], []
    for n in p["N"]:
        x = start_tree(p["start"], n, g)
        zero.append(duality_check(x, p["m"], s, 0.0, 2, g))
        reports.append(duality_check(x, p["m"], s, p["horizon"], p["replicates"], g))
    header = ["N", "horizon", "lhs", "lhs_se", "rhs", "rhs_se", "rhs_exact", "gap", "gap_se"]
    rows = [[r.n, r.horizon, r.lhs[0], r.lhs[1], r.rhs[0], r.rhs[1], r.rhs_exact, r.gap, r.gap_se]
            for r in reports]
    trend = duality_trend_ok(reports)
    exact0 = all(z.lhs == z.rhs for z in zero)
    return header, rows, {"shape": s.canonical_key.decode()}, [
        _check("horizon 0: lhs == rhs exactly", exact0),
        _check("gap non-increasing in N within combined standard errors", trend)]


def duality_trend_ok(reports) -> bool:
    for a, b in zip(reports, reports[1:]):
        if b.gap > a.gap + math.hypot(a.gap_se, b.gap_se):
            return False
    return True


def exp_mixing(p, g):
    from .crt_stats import mixing_experiment
    start = p["start"]
    if start not in ("comb", "balanced", "uniform"):
        from .serialize import load
        start = load(start)
    tab = mixing_experiment(p["N"], start, p["m"], p["horizons"], p["replicates"], g)
    header = ["t", "shape_key", "mean", "se", "target", "z"]
    rows = [[r["t"], r["shape_key"], float(r["mean"]), r["se"], float(r["target"]), r["z"]] for r in tab.rows]
    last = tab.at(max(p["horizons"]))
    ok = all(abs(r["mean"] - r["target"]) <= p["z_max"] * Fraction(r["se"]) for r in last)
    return header, rows, {"target": str(tab.target)}, [
        _check("final horizon within z_max standard errors of target", ok)]


def identity_cases(n_max: int, cases: int, g) -> list[dict]:
    """Random exact checks of the four finite-tree identities; one summary row per identity."""
    from .errors import InternalInconsistency
    from .mass_poly import lemma_lambda_check, matching_lemma_check
    from .tree import midpoint_identity, total_length, uniform_cladogram
    fails = {"proportion of leaves vs edges": 0, "edge matching": 0, "edge-midpoint count": 0,
             "total length two routes": 0}
    for _ in range(cases):
        n = int(g.integers(4, n_max + 1))
        t = uniform_cladogram(n, g)
        v = int(g.integers(n + 1, 2 * n - 1))
        u = int(g.integers(1, 2 * n - 2))
        while u == v:
            u = int(g.integers(1, 2 * n - 2))
        fails["proportion of leaves vs edges"] += not lemma_lambda_check(t, v, u)[2]
        fails["edge matching"] += matching_lemma_check(t, lambda a, b: a * b)[2] != 0
        z, z2 = (int(x) for x in g.choice(np.arange(1, n + 1), 2, replace=False))
        lhs, rhs = midpoint_identity(t, z, z2)
        fails["edge-midpoint count"] += lhs != rhs
        try:
            total_length(t)
        except InternalInconsistency:
            fails["total length two routes"] += 1
    return [{"identity": k, "cases": cases, "failures": v} for k, v in fails.items()]


def exp_identities(p, g):
    rows = identity_cases(p["N_max"], p["cases"], g)
    return ["identity", "cases", "failures"], [[r["identity"], r["cases"], r["failures"]] for r in rows], {}, [
        _check(f"{r['identity']}: zero failures", r["failures"] == 0) for r in rows]


def exp_distance_matrix(p, g):
    from .crt_stats import distance_matrix_mc, four_point_violation
    t = _start_tree(p["start"], p["N"], g)
    d = distance_matrix_mc(t, p["m"], p["samples"], g, exact=True)
    scale = 2 * t.n_leaves**3
    rows = []
    for k, mat in enumerate(d):
        for i in range(p["m"]):
            for j in range(p["m"]):
                rows.append([k, i, j, float(mat[i, j]) / scale])
    sym = bool(np.array_equal(d, d.transpose(0, 2, 1)))
    diag = bool((np.diagonal(d, axis1=1, axis2=2) == 0).all())
    fp = max((four_point_violation(mat) for mat in d), default=0) if p["m"] >= 4 else 0
    return ["sample", "i", "j", "r"], rows, {"four_point_max_defect": int(fp)}, [
        _check("symmetric with zero diagonal", sym and diag),
        _check("four-point condition", fp == 0)]


EXPERIMENTS = {
    "simulate": exp_simulate,
    "generator-gap": exp_generator_gap,
    "mass-generator-gap": exp_mass_generator_gap,
    "crt-moments": exp_crt_moments,
    "qn-table": exp_qn_table,
    "duality": exp_duality,
    "mixing": exp_mixing,
    "identities": exp_identities,
    "distance-matrix": exp_distance_matrix,
}


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _set_threads(k: int) -> int:
    try:
        import numba
        k = min(k, numba.config.NUMBA_NUM_THREADS)
        numba.set_num_threads(k)
    except Exception:  # pragma: no cover - numba without threading layer
        pass
    return k


def run(config: ExperimentConfig) -> tuple[int, dict]:
    """Run one experiment and write its reports.

    Returns ``(exit status, paths)`` where ``paths`` maps ``"csv"``,
    ``"json"`` (and ``"jsonl"`` for simulations) to written files.
    """
    if config.experiment not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {config.experiment!r}")
    _set_threads(config.threads)
    random.seed(config.seed)
    g = np.random.default_rng(np.random.SeedSequence(config.seed))
    t0 = time.perf_counter()
    header, rows, metrics, checks = EXPERIMENTS[config.experiment](config.params, g)
    wall = time.perf_counter() - t0
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    stem = config.output_name or f"{config.experiment}-{stamp}"
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / f"{stem}.csv", "json": out / f"{stem}.json"}
    paths["csv"].write_text(_csv(header, rows), encoding="utf-8", newline="")
    jsonl = metrics.pop("trajectory_jsonl", None)
    if jsonl is not None:
        paths["jsonl"] = out / f"{stem}.jsonl"
        paths["jsonl"].write_text(jsonl, encoding="utf-8")
    passed = all(c["pass"] for c in checks)
    summary = {
        "experiment": config.experiment,
        "params": config.params,
        "seed": config.seed,
        "metrics": metrics,
        "assertions": checks,
        "pass": passed,
        "version": __version__,
        "config": config.echo(),
        "conflicts": config.conflicts,
        "timestamp": stamp,
        "wall_clock_s": wall,
    }
    paths["json"].write_text(json.dumps(summary, indent=2, default=_fmt) + "\n", encoding="utf-8")
    for c in checks:
        log.info("%s: %s %s", "PASS" if c["pass"] else "FAIL", c["name"], c["detail"])
    return (0 if passed else 2), paths


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
        status, paths = run(cfg)
    except (UsageError, ParseError) as exc:
        log.error("%s", exc)
        return 1
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return 1
    except CladoflowError as exc:
        log.error("%s", exc)
        return 1
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return status


if __name__ == "__main__":
    sys.exit(main())
