"""Command-line front end.

Subcommands
-----------
gen-env   write a synthetic environment file and print its summary
run       run replications of one configuration
sweep     run a cartesian grid of configurations
report    tabulate final cumulative regret of stored runs

Exit codes are 0 on success, 1 for usage or input errors and 2 when a
simulation fails at runtime.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig, apply_overrides, default_config_dict, load_config
from .environment import (ContextDistribution, generate_hierarchical_env, generate_sparse_env,
                          save_env)
from .exceptions import InvalidEnvironmentError
from .harness import EpisodeError, read_traces_csv, run_replications, write_run

logger = logging.getLogger("ebmbandit")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

# Short names accepted by ``sweep --grid``.
GRID_ALIASES = {
    "N": "env.n_instances",
    "K": "env.n_arms",
    "d": "env.dim",
    "policy": "policy.kind",
    "context": "env.context.kind",
    "arrival": "env.arrival",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _seed_list(values):
    """``--seeds`` entries are single seeds or ``start:stop`` ranges."""
    seeds = []
    for v in values:
        if ":" in v:
            lo, hi = v.split(":", 1)
            seeds.extend(range(int(lo), int(hi)))
        else:
            seeds.append(int(v))
    if not seeds:
        raise UsageError("--seeds selects no seeds")
    return seeds


# -- gen-env ---------------------------------------------------------------

def cmd_gen_env(args) -> int:
    rng = np.random.default_rng(args.seed)
    context = ContextDistribution(args.context)
    if args.mode == "sparse":
        env = generate_sparse_env(args.n_instances, args.n_arms, args.dim, args.sparsity,
                                  args.delta_scale, args.arrival, rng, context)
    else:
        arrival = "data_poor" if args.mode == "data-poor" else args.arrival
        env = generate_hierarchical_env(args.n_instances, args.n_arms, args.dim, arrival, rng, context)
    save_env(args.out, env)
    print(f"wrote {args.out}: N={env.N} K={env.K} d={env.d} mode={args.mode}")
    for k, S in enumerate(env.Sigma):
        print(f"  arm {k}: lambda_min(Sigma) = {np.linalg.eigvalsh(S).min():.6g}")
    print("  arrival = [" + ", ".join(f"{p:.6g}" for p in env.arrival) + "]")
    return EXIT_OK


# -- run ---------------------------------------------------------------------

def _config_doc(args, extra=()):
    doc = default_config_dict()
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        try:
            doc = load_config(path).to_dict()
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    overrides = list(extra) + list(args.set or [])
    return apply_overrides(doc, overrides)


def _run_overrides(args):
    out = []
    if getattr(args, "policy", None):
        out.append(f"policy.kind={json.dumps(args.policy)}")
    if getattr(args, "seeds", None):
        out.append(f"seeds={json.dumps(_seed_list(args.seeds))}")
    return out


def _execute(config: RunConfig, out_dir: Path, jobs: int):
    """Run one configuration into ``out_dir``; a FAILED marker records any error."""
    out_dir.mkdir(parents=True, exist_ok=True)
    marker = out_dir / "FAILED"
    if marker.exists():
        marker.unlink()
    try:
        result = run_replications(config, jobs=jobs)
    except Exception as exc:
        marker.write_text(f"{type(exc).__name__}: {exc}\n")
        raise
    write_run(result, out_dir)
    return result


def cmd_run(args) -> int:
    doc = _config_doc(args, _run_overrides(args))
    config = RunConfig.from_dict(doc)
    out = args.out or config.output_dir
    if not out:
        raise UsageError("no output directory: pass --out or set output_dir in the config")
    try:
        result = _execute(config, Path(out), args.jobs)
    except EpisodeError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    finals = result.final_total
    sd = finals.std(ddof=1) if len(finals) > 1 else 0.0
    print(f"{config.policy.label}: final cumulative regret {finals.mean():.4f} +/- {sd:.4f} "
          f"over {len(finals)} seeds -> {out}")
    return EXIT_OK


# -- sweep -------------------------------------------------------------------

def _parse_grid(items):
    if not items:
        raise UsageError("sweep needs at least one --grid key=v1,v2,...")
    axes = []
    for item in items:
        if "=" not in item:
            raise UsageError(f"grid entry {item!r} is not of the form key=v1,v2")
        key, raw = item.split("=", 1)
        key = GRID_ALIASES.get(key.strip(), key.strip())
        values = [v for v in raw.split(",") if v != ""]
        if not values:
            raise UsageError(f"grid axis {key!r} has no values")
        axes.append((key, values))
    return axes


def _override(key, raw):
    try:
        json.loads(raw)
        return f"{key}={raw}"
    except json.JSONDecodeError:
        return f"{key}={json.dumps(raw)}"


def _sweep_point(task):
    index, point, doc, out_dir = task
    entry = {"index": index, "point": point, "dir": out_dir.name}
    try:
        config = RunConfig.from_dict(doc)
        _execute(config, out_dir, 1)
        entry["status"] = "ok"
    except Exception as exc:  # a failed point must not stop the sweep
        logger.debug("point %d failed:\n%s", index, traceback.format_exc())
        entry["status"] = "failed"
        entry["error"] = f"{type(exc).__name__}: {exc}"
        if not (out_dir / "FAILED").exists():
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "FAILED").write_text(entry["error"] + "\n")
    return entry


def cmd_sweep(args) -> int:
    axes = _parse_grid(args.grid)
    base = _config_doc(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tasks = []
    for index, combo in enumerate(itertools.product(*(vals for _, vals in axes))):
        point = dict(zip((k for k, _ in axes), combo))
        doc = apply_overrides(base, [_override(k, v) for k, v in point.items()])
        tasks.append((index, point, doc, out / f"point_{index:03d}"))
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            entries = list(pool.map(_sweep_point, tasks))
    else:
        entries = [_sweep_point(t) for t in tasks]
    manifest = {"axes": [k for k, _ in axes], "points": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    failed = [e for e in entries if e["status"] != "ok"]
    print(f"sweep: {len(entries) - len(failed)}/{len(entries)} points succeeded -> {out}")
    for e in failed:
        print(f"  point {e['index']} {e['point']}: {e['error']}", file=sys.stderr)
    return EXIT_RUNTIME if failed else EXIT_OK


# -- report ------------------------------------------------------------------

REPORT_COLUMNS = ("run", "point", "policy", "seeds", "horizon", "final_mean", "final_sd")


def _run_dirs(paths):
    """Expand sweep directories through their manifests; yields (run_dir, point label)."""
    for p in paths:
        p = Path(p)
        manifest = p / "manifest.json"
        if manifest.exists():
            try:
                entries = json.loads(manifest.read_text())["points"]
            except (json.JSONDecodeError, KeyError, TypeError):
                yield p, None, "corrupt manifest.json"
                continue
            for e in entries:
                label = ";".join(f"{k}={v}" for k, v in sorted(e.get("point", {}).items()))
                yield p / e["dir"], label, None
        else:
            yield p, "", None


def _summarize_run(run_dir: Path, label: str):
    if (run_dir / "FAILED").exists():
        return None, "run marked FAILED"
    try:
        config = json.loads((run_dir / "config.json").read_text())
        finals = read_traces_csv(run_dir / "traces.csv")
    except FileNotFoundError as exc:
        return None, f"missing {Path(exc.filename).name}"
    except (json.JSONDecodeError, KeyError, ValueError, csv.Error) as exc:
        return None, f"corrupt output ({type(exc).__name__})"
    if not finals:
        return None, "trace file has no rows"
    values = np.array([finals[s] for s in sorted(finals)])
    sd = values.std(ddof=1) if len(values) > 1 else 0.0
    kind = config.get("policy", {}).get("kind", "?")
    policy = {"OLSGreedy": "ols_greedy"}.get(kind, kind)
    return {"run": str(run_dir), "point": label, "policy": policy, "seeds": len(values),
            "horizon": config.get("horizon", ""), "final_mean": f"{values.mean():.6f}",
            "final_sd": f"{sd:.6f}"}, None


def build_report(paths):
    rows, problems = [], []
    for run_dir, label, err in _run_dirs(paths):
        if err:
            problems.append((str(run_dir), err))
            continue
        row, err = _summarize_run(run_dir, label)
        if err:
            problems.append((str(run_dir), err))
        else:
            rows.append(row)
    rows.sort(key=lambda r: (r["point"], r["policy"], r["run"]))
    problems.sort()
    return rows, problems


def format_table(rows) -> str:
    cells = [list(REPORT_COLUMNS)] + [[str(r[c]) for c in REPORT_COLUMNS] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(REPORT_COLUMNS))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    return "\n".join(lines) + "\n"


def report_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def cmd_report(args) -> int:
    rows, problems = build_report(args.paths)
    text = format_table(rows)
    if problems:
        text += "\nunreadable runs:\n" + "".join(f"  {p}: {why}\n" for p, why in problems)
    sys.stdout.write(text)
    if args.csv:
        Path(args.csv).write_text(report_csv(rows))
    if args.text:
        Path(args.text).write_text(text)
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ebmbandit", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-env", help="generate an environment file")
    g.add_argument("--mode", choices=["hierarchical", "data-poor", "sparse"], default="hierarchical")
    g.add_argument("--n-instances", type=_positive_int, default=10)
    g.add_argument("--n-arms", type=_positive_int, default=5)
    g.add_argument("--dim", type=_positive_int, default=3)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--context", choices=["mixture_gaussian", "uniform"], default="mixture_gaussian")
    g.add_argument("--arrival", choices=["balanced", "data_poor"], default="balanced",
                   help="arrival law for the hierarchical and sparse modes")
    g.add_argument("--sparsity", type=int, default=1, help="nonzero deviations per instance (sparse mode)")
    g.add_argument("--delta-scale", type=float, default=1.0, help="deviation scale (sparse mode)")
    g.add_argument("--out", default="env.json")
    g.set_defaults(func=cmd_gen_env)

    r = sub.add_parser("run", help="run replications of one configuration")
    r.add_argument("--config", help="JSON run configuration")
    r.add_argument("--policy", help="policy kind, e.g. ebmUCB or LinTS")
    r.add_argument("--seeds", action="append", metavar="SEED",
                   help="seed or start:stop range; repeatable")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted-key override; repeatable")
    r.add_argument("--out", help="output directory")
    r.add_argument("--jobs", type=_positive_int, default=1)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a grid of configurations")
    s.add_argument("--config")
    s.add_argument("--grid", action="append", metavar="KEY=V1,V2",
                   help="grid axis; keys may be dotted or one of " + ", ".join(GRID_ALIASES))
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=_positive_int, default=1)
    s.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="summarize stored runs")
    p.add_argument("paths", nargs="+", help="run or sweep directories")
    p.add_argument("--csv", help="also write the table as CSV here")
    p.add_argument("--text", help="also write the aligned table here")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, InvalidEnvironmentError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EpisodeError, ArithmeticError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
