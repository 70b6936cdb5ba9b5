"""Command-line entry point.

Exit codes: 0 success, 1 partial failure (solver or infeasible rows),
2 invalid input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .clustering import SCHEMES, agglomerate, design_sets
from .harness import SweepSpec, run_sweep, write_outputs
from .model import ConfigError, validate_config
from .rates import evaluate
from .scenario import ScenarioSpec, generate, make_config, scenario_from_dict, scenario_to_dict
from .wmmse import AlgorithmError, AlgorithmOptions, run_algorithm1

EXIT_OK, EXIT_PARTIAL, EXIT_INVALID = 0, 1, 2


class InputError(Exception):
    pass


def _dump(obj, path) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as f:
            f.write(text)


def _load_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _load_scenario(path):
    try:
        return scenario_from_dict(_load_json(path))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed scenario ({exc})") from exc


def _antennas(text: str, num_rrhs: int):
    parts = [int(p) for p in text.split(",")]
    if len(parts) == 1:
        return parts * num_rrhs
    return parts


def cmd_scenario_generate(args) -> int:
    spec = ScenarioSpec(seed=args.seed, radius_m=args.radius, shadowing_std_db=args.shadowing_db)
    cfg = make_config(args.num_rrhs, args.num_ues, _antennas(args.antennas, args.num_rrhs),
                      args.fronthaul, args.power_dbm, spec)
    validate_config(cfg)
    placement, chan = generate(spec, cfg)
    _dump(scenario_to_dict(spec, cfg, placement, chan), args.out)
    return EXIT_OK


def cmd_cluster(args) -> int:
    _, cfg, _, chan = _load_scenario(args.scenario)
    dendro = agglomerate(chan)
    struct = design_sets("rsma-hc", chan, cfg.num_ues)
    _dump({"dendrogram": dendro.to_dict(), "sets": struct.to_dict()["sets"]}, args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    spec, cfg, _, chan = _load_scenario(args.scenario)
    validate_config(cfg)
    struct = design_sets(args.scheme, chan, cfg.num_ues, spec.seed)
    opts = AlgorithmOptions(epsilon=args.epsilon, max_iters=args.max_iters, init_seed=args.init_seed,
                            record_timing=args.timing)
    status = EXIT_OK
    error = ""
    try:
        vars, report, trace = run_algorithm1(chan, struct, cfg, opts)
    except AlgorithmError as exc:
        vars, trace = exc.last_iterate, exc.trace
        report = evaluate(vars, chan, struct, cfg)
        error = str(exc)
        status = EXIT_PARTIAL
    if report.violations:
        status = EXIT_PARTIAL
    out = {
        "scheme": args.scheme,
        "structure": struct.to_dict(),
        "variables": vars.to_dict(struct),
        "report": report.to_dict(struct),
        "trace": trace.to_dict(),
        "error": error,
    }
    _dump(out, args.out)
    return status


def cmd_sweep(args) -> int:
    spec = SweepSpec.from_dict(_load_json(args.spec))
    if args.workers is not None:
        spec = SweepSpec(**{**spec.__dict__, "workers": args.workers})
    log = logging.getLogger("rsma_cran.sweep")
    result = run_sweep(spec, progress=lambda r: log.info("seed=%s scheme=%s N_U=%s P=%s r_min=%s %s",
                                                          r["seed"], r["scheme"], r["N_U"], r["P_dBm"],
                                                          r["r_min_bits"], r["error"]))
    write_outputs(result, args.out_csv, args.out_summary)
    return EXIT_PARTIAL if result.failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rsma-cran", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sc = sub.add_parser("scenario", help="network realizations")
    sc_sub = sc.add_subparsers(dest="action", required=True)
    g = sc_sub.add_parser("generate", help="draw one scenario and write scenario.json")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--num-rrhs", type=int, required=True)
    g.add_argument("--num-ues", type=int, required=True)
    g.add_argument("--antennas", default="1", help="per-RRH count, or comma list")
    g.add_argument("--fronthaul", type=float, default=10.0, help="C_i in bits/symbol")
    g.add_argument("--power-dbm", type=float, default=43.0)
    g.add_argument("--radius", type=float, default=100.0)
    g.add_argument("--shadowing-db", type=float, default=8.0)
    g.add_argument("--out", default="-")
    g.set_defaults(func=cmd_scenario_generate)

    c = sub.add_parser("cluster", help="dendrogram and common sets of a scenario")
    c.add_argument("--scenario", required=True)
    c.add_argument("--out", default="-")
    c.set_defaults(func=cmd_cluster)

    s = sub.add_parser("solve", help="run the WMMSE algorithm for one scheme")
    s.add_argument("--scheme", choices=SCHEMES, required=True)
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", default="-")
    s.add_argument("--epsilon", type=float, default=1e-4)
    s.add_argument("--max-iters", type=int, default=200)
    s.add_argument("--init-seed", type=int, default=0)
    s.add_argument("--timing", action="store_true", help="record wall-clock times (breaks byte-identity)")
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="Monte-Carlo sweep to CSV and JSON summary")
    w.add_argument("--spec", required=True)
    w.add_argument("--out-csv", required=True)
    w.add_argument("--out-summary", required=True)
    w.add_argument("--workers", type=int, default=None)
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
