"""Command-line entry point: ``coalition-market <subcommand> ...``.

Exit codes: 0 success, 1 configuration error, 2 runtime error,
3 a check failed while ``--assert`` was given.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, MarketConfig, load_config
from .experiments import baseline_noncooperative, build_scenario, device_payoffs
from .io import SCHEMAS, emit_csv, write_rows
from .oracle import MAX_PLAYERS, harmonic, optimal_partition, ratio_bound_check
from .recipes import RECIPES, fig8, run_recipe
from .solver import discover_types, majp_solve

log = logging.getLogger("coalition_market")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3


def _config(path: str | None) -> MarketConfig:
    return load_config(path) if path else MarketConfig()


def _checks_file(out: Path, name: str, checks: dict[str, bool]) -> None:
    write_rows(out / f"{name}_checks.csv", ("check", "passed"),
               [{"check": k, "passed": bool(v)} for k, v in checks.items()])


def cmd_discover(args) -> int:
    cfg = _config(args.config)
    scn = build_scenario(cfg, args.seed)
    found = discover_types(scn.devices, cfg.unit_comm_cost, args.seed, K=cfg.K)
    out = Path(args.out)
    emit_csv(scn.devices, out / "types.csv", kind="types")
    print(f"discovered {len(found.levels)} device types; communication cost {found.comm_cost!r}")
    print("platform view (level, devices): " + ", ".join(f"{k}:{n}" for k, n in found.platform.level_counts))
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _config(args.config)
    scn = build_scenario(cfg, args.seed)
    trace = majp_solve(scn.game, args.seed, max_iters=cfg.max_iters)
    out = Path(args.out)
    emit_csv(trace, out / "trace.csv", kind="trace")
    emit_csv(trace, out / "summary.csv", kind="summary")
    coop, part = device_payoffs(scn, trace.blocks, trace.final_prices)
    base = baseline_noncooperative(scn)
    emit_csv([{"device_id": m, "majp_payoff": float(coop[m]), "baseline_payoff": float(base.payoffs[m]),
               "majp_a": int(part[m])} for m in range(len(coop))], out / "payoffs.csv", kind="payoffs")
    print(f"{len(trace.iterations)} accepted switches; {len(trace.blocks)} coalitions; "
          f"social value {trace.social_value!r}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _config(args.config)
    if cfg.num_devices > MAX_PLAYERS:
        raise ConfigError(f"oracle needs at most {MAX_PLAYERS} devices, config has {cfg.num_devices}")
    scn = build_scenario(cfg, args.seed)
    best = optimal_partition(scn.game)
    trace = majp_solve(scn.game, args.seed, max_iters=cfg.max_iters)
    size = max(len(b) for b in trace.blocks)
    ok = ratio_bound_check(trace.social_value, best.value, size)
    ratio = trace.social_value / best.value if best.value > 0 else float("nan")
    emit_csv([{"M": cfg.num_devices, "v_majp": trace.social_value, "v_star": best.value, "max_coalition_size": size,
               "harmonic_bound": harmonic(size), "ratio": ratio, "bound_ok": "" if ok is None else bool(ok)}],
             Path(args.out) / "oracle.csv", kind="oracle")
    verdict = "skipped (optimum not positive)" if ok is None else ("pass" if ok else "FAIL")
    print(f"v(MAJP)={trace.social_value!r} v*={best.value!r} ratio bound: {verdict}")
    if args.assert_checks and ok is False:
        return EXIT_CHECK
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = _config(args.config)
    res = run_recipe(args.recipe, cfg, args.runs, args.seed)
    out = Path(args.out)
    emit_csv(res.rows, out / f"{res.name}.csv")
    _checks_file(out, res.name, res.checks)
    for k, v in res.checks.items():
        print(f"[{'PASS' if v else 'FAIL'}] {res.name}: {k}")
    for k, v in res.notes.items():
        print(f"  {k} = {v!r}")
    if args.assert_checks and not res.passed:
        return EXIT_CHECK
    return EXIT_OK


def cmd_depression(args) -> int:
    cfg = _config(args.config)
    res = fig8(cfg, 1, 0)
    out = Path(args.out)
    emit_csv(res.rows, out / "depression.csv")
    _checks_file(out, "depression", res.checks)
    if args.assert_checks and not res.passed:
        return EXIT_CHECK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coalition-market", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True, config=True):
        if config:
            sp.add_argument("--config", help="INI config file (defaults when omitted)")
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--assert", dest="assert_checks", action="store_true",
                        help="exit with status 3 when a check fails")

    common(sub.add_parser("discover", help="private type discovery only; writes types.csv"))
    common(sub.add_parser("solve", help="full MAJP solve; writes trace, summary and payoff CSVs"))
    common(sub.add_parser("oracle", help="exhaustive optimum and ratio-bound verdict"))
    ex = sub.add_parser("experiment", help="figure reproduction")
    ex.add_argument("--recipe", required=True, choices=sorted(RECIPES))
    ex.add_argument("--runs", type=int, default=100)
    common(ex)
    common(sub.add_parser("depression", help="value-depression series"), seed=False)
    return p


HANDLERS = {"discover": cmd_discover, "solve": cmd_solve, "oracle": cmd_oracle,
            "experiment": cmd_experiment, "depression": cmd_depression}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - top-level boundary reports and maps to an exit code
        log.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
