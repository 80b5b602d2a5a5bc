"""Command-line front end: list scenarios, run them, check derivative hooks."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import ConfigError, NumericalFailure
from .options import parse_value
from .problem import Problem, check_derivatives
from .testbench.harness import RunResult, run_closed_loop
from .testbench.scenarios import SCENARIOS

EXIT_OK, EXIT_FAILED, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2, 3
CHECK_TOL = 1e-4


# --- list ------------------------------------------------------------------

def catalog(registry=None) -> list[dict]:
    registry = SCENARIOS if registry is None else registry
    out = []
    for name in sorted(registry):
        sc = registry[name]()
        pb = sc.make_problem()
        out.append({
            "name": name,
            "kind": sc.kind,
            "description": sc.description,
            "dims": {k: getattr(pb.dims, k) for k in ("Nx", "Nu", "Np", "Ng", "Nh", "NgT", "NhT")},
            "options": sc.options.to_dict(),
        })
    return out


def cmd_list(args, registry=None, stream=None) -> int:
    stream = stream or sys.stdout
    entries = catalog(registry)
    if args.json:
        stream.write(json.dumps(entries, indent=2) + "\n")
        return EXIT_OK
    for e in entries:
        d = e["dims"]
        stream.write(f"{e['name']:30s} {e['kind']:10s} Nx={d['Nx']} Nu={d['Nu']} Np={d['Np']} "
                     f"Ng={d['Ng']} Nh={d['Nh']} NgT={d['NgT']} NhT={d['NhT']}  {e['description']}\n")
    return EXIT_OK


# --- run -------------------------------------------------------------------

def parse_overrides(pairs) -> dict:
    out = {}
    for item in pairs or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = parse_value(value.strip())
    return out


def load_overrides(config: str | None, pairs) -> dict:
    merged = {}
    if config:
        try:
            data = json.loads(Path(config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {config!r}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config file {config!r} must hold a JSON object")
        merged.update(data)
    merged.update(parse_overrides(pairs))
    return merged


def build_scenario(name: str, overrides: dict):
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; known: {sorted(SCENARIOS)}")
    sc = SCENARIOS[name]().with_options(overrides)
    sc.options.validate(sc.make_problem().dims)
    return sc


def write_outputs(result: RunResult, out_dir: Path, fmt: str) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    name = result.metrics.scenario
    if fmt == "csv":
        traj = out_dir / f"{name}.csv"
        traj.write_text(result.log.to_csv())
    else:
        traj = out_dir / f"{name}.trajectory.json"
        traj.write_text(json.dumps({"columns": result.log.columns, "rows": result.log.rows}))
    metrics = out_dir / f"{name}.metrics.json"
    metrics.write_text(result.metrics.to_json() + "\n")
    return [traj, metrics]


def _run_one(name: str, overrides: dict, seed: int, out: str, fmt: str) -> tuple[int, str]:
    try:
        sc = build_scenario(name, overrides)
    except ConfigError as exc:
        return EXIT_CONFIG, f"{name}: config error: {exc}"
    result = run_closed_loop(sc, seed=seed)
    files = write_outputs(result, Path(out), fmt)
    if isinstance(result.error, NumericalFailure):
        return EXIT_NUMERICAL, f"{name}: numerical failure: {result.error}"
    return EXIT_OK, f"{name}: status={result.metrics.status} wrote {', '.join(str(f) for f in files)}"


def cmd_run(args) -> int:
    try:
        overrides = load_overrides(args.config, args.set)
        for name in args.scenarios:
            build_scenario(name, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    jobs = [(n, overrides, args.seed, args.out, args.format) for n in args.scenarios]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, *zip(*jobs)))
    else:
        results = [_run_one(*j) for j in jobs]
    code = EXIT_OK
    for rc, msg in results:
        print(msg, file=sys.stderr if rc else sys.stdout)
        code = max(code, rc)
    return code


# --- check -----------------------------------------------------------------

def check_problem(problem: Problem, optimize_T: bool = False, stream=None, seed: int = 0) -> int:
    stream = stream or sys.stdout
    report = check_derivatives(problem, seed=seed, optimize_T=optimize_T)
    failed = []
    for hook, err in report.items():
        if err is None:
            stream.write(f"{hook:14s} not applicable\n")
            continue
        ok = err <= CHECK_TOL
        if not ok:
            failed.append(hook)
        stream.write(f"{hook:14s} {err:.3e} {'ok' if ok else 'FAIL'}\n")
    if failed:
        stream.write(f"failed hooks: {', '.join(failed)}\n")
        return EXIT_FAILED
    return EXIT_OK


def cmd_check(args) -> int:
    code = EXIT_OK
    for name in args.scenarios:
        try:
            sc = build_scenario(name, load_overrides(args.config, args.set))
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"[{name}]")
        code = max(code, check_problem(sc.make_problem(), sc.options.optimize_T, seed=args.seed))
    return code


# --- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="almpc", description="augmented Lagrangian MPC testbench")
    sub = p.add_subparsers(dest="verb", required=True)

    ls = sub.add_parser("list", help="list registered scenarios")
    ls.add_argument("--json", action="store_true", help="machine-readable catalog")
    ls.set_defaults(func=cmd_list)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scenarios", nargs="+", metavar="scenario")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="option override (repeatable)")
    common.add_argument("--config", help="JSON file of option overrides; --set wins")
    common.add_argument("--seed", type=int, default=0)

    run = sub.add_parser("run", parents=[common], help="run scenarios, write trajectory and metrics")
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument("--format", choices=["csv", "json"], default="csv", help="trajectory log format")
    run.add_argument("--jobs", type=int, default=1, help="scenarios run concurrently")
    run.set_defaults(func=cmd_run)

    chk = sub.add_parser("check", parents=[common], help="derivative hooks vs finite differences")
    chk.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
