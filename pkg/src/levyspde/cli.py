"""``levyspde`` command line: check, simulate, verify, sweep.

Exit codes: 0 when everything passes, 1 for a scientific failure (a
validator, an acceptance criterion, or a halted path under ``--strict``),
2 for usage or configuration errors.  Every command writes the resolved
configuration to ``<out>/resolved_config.yaml``.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import sys
from pathlib import Path

from .acceptance import run_all
from .config import (
    ConfigError,
    apply_override,
    build_from_config,
    dump_config,
    initial_state,
    load_config,
    parse_value,
    resolve_config,
    solve_config,
)
from .equations import run_checks
from .harness import (
    apriori_linearity,
    continuous_dependence,
    emit_report,
    mc_moments,
    run_paths,
    self_convergence,
)
from .model import ModelValidationError, check_subcriticality, is_admissible, p_from_alpha
from .noise import RngStream, sample_noise, write_noise
from .solver import solve_with_noise, write_path_csv

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _resolve(args) -> dict:
    data = load_config(args.config) if args.config else {}
    if args.preset:
        data = dict(data)
        data.pop("model", None)
        data["preset"] = args.preset
    cfg = resolve_config(data, seed=args.seed, paths=args.paths, out=args.out, jobs=args.jobs)
    if args.steps is not None:
        cfg = apply_override(cfg, "solve.n_steps", args.steps)
    if args.strict:
        cfg["strict"] = True
    for item in args.set or ():
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        cfg = apply_override(cfg, key.strip(), parse_value(val))
    return resolve_config(cfg)


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from exc
    (out / "resolved_config.yaml").write_text(dump_config(cfg))
    return out


def _jobs(cfg: dict) -> int:
    return int(cfg["jobs"])


# ---------------------------------------------------------------------------


def cmd_check(cfg: dict) -> int:
    """Run every validator declared for the model; 0 iff all pass."""
    out = _out_dir(cfg)
    lines = []
    try:
        preset = build_from_config(cfg)
    except ModelValidationError as exc:
        lines.append(f"FAIL build: {exc}")
        _emit(out / "check.txt", lines)
        return EXIT_FAIL
    ok = True
    params = preset.model.params
    for cond in check_subcriticality(params).conditions:
        lines.append(f"{'PASS' if cond.ok else 'FAIL'} {cond.line()}")
        ok &= cond.ok
    p = p_from_alpha(params.alpha_F)
    adm = is_admissible(p, params.alpha_F)
    lines.append(f"{'PASS' if adm else 'FAIL'} admissible pair (p={p:.6g}, theta={params.alpha_F:g})")
    ok &= adm
    for name, (verdict, detail) in run_checks(preset, seed=cfg["seed"]).items():
        expected = preset.expected_checks[name]
        good = verdict == expected
        ok &= good
        lines.append(f"{'PASS' if good else 'FAIL'} {detail}"
                     + ("" if expected else " (expected to fail for this variant)"))
    _emit(out / "check.txt", lines)
    return EXIT_OK if ok else EXIT_FAIL


class _SimTask:
    def __init__(self, model, u0, scfg, seed, out, modes, dump):
        self.model, self.u0, self.scfg, self.seed = model, u0, scfg, seed
        self.out, self.modes, self.dump = out, modes, dump

    def __call__(self, i):
        rng = RngStream(self.seed, i)
        noise = sample_noise(self.model.levy, self.model.noise_dim, self.scfg.T, self.scfg.n_steps, rng)
        if self.dump:
            write_noise(self.out / f"noise_{i:04d}.bin", noise)
        path = solve_with_noise(self.model, self.u0, self.scfg, noise)
        write_path_csv(self.out / f"path_{i:04d}.csv", path, self.model.triple, modes=self.modes)
        return path.status, path.status_line


def cmd_simulate(cfg: dict) -> int:
    """Solve ``paths`` paths and write one CSV per path."""
    out = _out_dir(cfg)
    try:
        preset = build_from_config(cfg)
    except ModelValidationError as exc:
        print(f"model rejected: {exc}")
        return EXIT_FAIL
    scfg = solve_config(cfg)
    u0 = initial_state(cfg, preset)
    task = _SimTask(preset.model, u0, scfg, cfg["seed"], out, cfg["modes"], cfg["dump_noise"])
    results = run_paths(task, cfg["paths"], _jobs(cfg))
    halted = 0
    lines = []
    for i, (status, line) in enumerate(results):
        lines.append(f"path {i}: {line}")
        halted += status != "completed"
    lines.append(f"summary: {len(results) - halted} completed, {halted} halted of {len(results)}")
    _emit(out / "simulate.txt", lines)
    return EXIT_FAIL if (halted and cfg["strict"]) else EXIT_OK


def cmd_verify(cfg: dict, criteria=None, paths=None) -> int:
    """Run the acceptance suite; 0 iff all selected criteria pass."""
    if paths is not None and paths < 2:
        raise UsageError("verify needs at least 2 paths (standard errors are undefined for 1)")
    out = _out_dir(cfg)
    selection = criteria or cfg["verify"]["criteria"]
    results = run_all(selection, paths=paths, jobs=_jobs(cfg))
    lines = []
    for r in results:
        lines.append(r.line())
        lines += [f"    {d}" for d in r.details]
    passed = all(r.passed for r in results)
    lines.append(f"acceptance: {sum(r.passed for r in results)}/{len(results)} passed")
    _emit(out / "acceptance.txt", lines)
    return EXIT_OK if passed else EXIT_FAIL


def _experiment(cfg: dict, preset):
    model = preset.model
    scfg = solve_config(cfg)
    ex = cfg["experiment"]
    seed, n, jobs = cfg["seed"], cfg["paths"], _jobs(cfg)
    u0 = initial_state(cfg, preset)
    kind = ex["kind"]
    if n < 2:
        raise UsageError(f"experiment {kind} needs at least 2 paths")
    if kind == "moments":
        return mc_moments(model, u0, scfg, n, seed, jobs)
    if kind == "apriori":
        shape = u0 / cfg["u0"]["scale"] if cfg["u0"]["scale"] else preset.u0(1.0)
        return apriori_linearity(model, ex["scales"], scfg, n, seed, u0_shape=shape,
                                 slack=ex["slack"], jobs=jobs)
    if kind == "contdep":
        return continuous_dependence(model, u0, ex["deltas"], scfg, n, seed, eps_grid=ex["eps"], jobs=jobs)
    return self_convergence(model, u0, ex["n_list"], scfg, n, seed, ref_factor=ex["ref_factor"], jobs=jobs)


def cmd_sweep(cfg: dict) -> int:
    """Run the configured experiment over a grid of numeric config values."""
    out = _out_dir(cfg)
    grid = cfg["sweep"]["grid"]
    if not grid:
        raise UsageError("sweep needs at least one grid key (sweep.grid or --grid key=v1,v2)")
    keys = sorted(grid)
    rows, ok = [], True
    for combo in itertools.product(*(grid[k] for k in keys)):
        point = cfg
        for k, v in zip(keys, combo):
            point = apply_override(point, k, v)
        try:
            point = resolve_config(point)
        except ConfigError as exc:
            raise UsageError(str(exc)) from exc
        try:
            preset = build_from_config(point)
        except ModelValidationError as exc:
            rows.append(list(combo) + ["rejected", repr(str(exc))])
            ok = False
            continue
        rep = _experiment(point, preset)
        label = "_".join(f"{k}={v}" for k, v in zip(keys, combo))
        sub = out / label.replace("/", "_")
        emit_report(rep, "csv", sub)
        emit_report(rep, "text", sub)
        ok &= rep.passed
        summary = ";".join(f"{k}={m!r}" for k, (m, _) in rep.estimates.items())
        rows.append(list(combo) + ["pass" if rep.passed else "fail", summary])
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys + ["verdict", "estimates"])
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    print(f"sweep: {len(rows)} grid points written to {out / 'sweep.csv'}")
    return EXIT_OK if ok else EXIT_FAIL


def _emit(path: Path, lines) -> None:
    text = "\n".join(lines) + "\n"
    path.write_text(text)
    sys.stdout.write(text)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", nargs="?", help="YAML run configuration")
    common.add_argument("--preset", help="registered preset name (replaces the config's model)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--paths", type=int, help="number of paths")
    common.add_argument("--steps", type=int, help="base step count")
    common.add_argument("--out", help="output directory")
    common.add_argument("--strict", action="store_true", help="treat halted paths as failures")
    common.add_argument("--jobs", type=int, help="worker processes for path-level parallelism")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a dotted config key, e.g. overrides.sigma=0.2")

    parser = argparse.ArgumentParser(prog="levyspde", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="run model validators")
    sub.add_parser("simulate", parents=[common], help="solve paths and write CSV files")
    v = sub.add_parser("verify", parents=[common], help="run the acceptance suite")
    v.add_argument("--criterion", type=int, action="append", choices=range(1, 11),
                   help="run only this criterion (repeatable)")
    s = sub.add_parser("sweep", parents=[common], help="parameter grid over numeric config keys")
    s.add_argument("--grid", action="append", metavar="KEY=V1,V2,...",
                   help="grid axis over a dotted config key (repeatable)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.paths is not None and args.paths < 1:
            raise UsageError("--paths must be positive")
        if args.command == "verify" and args.paths is not None and args.paths < 2:
            raise UsageError("verify needs at least 2 paths (standard errors are undefined for 1)")
        if args.jobs is not None and args.jobs < 1:
            raise UsageError("--jobs must be positive")
        cfg = _resolve(args)
        if args.command == "check":
            return cmd_check(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "verify":
            return cmd_verify(cfg, criteria=args.criterion, paths=args.paths)
        for item in args.grid or ():
            key, _, vals = item.partition("=")
            if not vals:
                raise UsageError(f"--grid expects key=v1,v2, got {item!r}")
            values = [parse_value(x) for x in vals.split(",")]
            if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in values):
                raise UsageError(f"grid values for {key} must be numeric")
            cfg = apply_override(cfg, "sweep.grid", {**cfg["sweep"]["grid"], key.strip(): values})
        return cmd_sweep(resolve_config(cfg))
    except (UsageError, ConfigError) as exc:
        print(f"levyspde: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KeyError, TypeError, ValueError) as exc:
        # builders reject malformed arguments (shapes, unknown presets)
        print(f"levyspde: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
