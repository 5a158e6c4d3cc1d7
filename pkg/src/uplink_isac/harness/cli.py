"""Command-line entry point: ``uplink-isac {converge,sweep,detect}``."""
from __future__ import annotations

import argparse
import logging
import sys

from ..errors import IsacError
from .config import RunConfig, load_config
from .experiments import run_detection_validation, run_power_convergence, run_rate_sweep
from .output import emit_outputs

_XLABEL = {"P": "P (dBm)", "P_tot": "P_tot (dBm)", "K": "K", "N_b": "N_b", "d_t2u": "d_t2u (m)", "T_p": "T_p"}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uplink-isac", description="Uplink ISAC power allocation and beamforming experiments.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("converge", "objective traces of both algorithms"),
                       ("sweep", "average sum rate / sensing SINR sweep"),
                       ("detect", "detection-probability validation")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", help="INI configuration file")
        s.add_argument("--seed", type=int, help="64-bit seed (overrides [experiment] seed)")
        s.add_argument("--out", help="output directory (overrides [experiment] outputs)")
        s.add_argument("--trials", type=int, help="Monte Carlo trials (overrides the config)")
        s.add_argument("--fix-placement", action="store_true", help="reuse one user placement for every trial")
        s.add_argument("--no-svg", action="store_true", help="write the CSV only")
    return p


def _resolve(args) -> RunConfig:
    run = load_config(args.config)
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.out is not None:
        kw["outputs"] = args.out
    if args.trials is not None:
        kw["trials"] = args.trials
    if kw:
        run = RunConfig(run.system, run.geometry, run.pathloss, run.experiment.with_(**kw))
    return run


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        run = _resolve(args)
        spec = run.experiment
        if args.command == "converge":
            rows = run_power_convergence(run, spec.seed)
            xlabel, name = "iteration", f"{spec.name}_converge"
        elif args.command == "sweep":
            rows = run_rate_sweep(run, fix_placement=args.fix_placement)
            xlabel, name = _XLABEL[spec.sweep], f"{spec.name}_sweep"
        else:
            if spec.sweep != "P_tot":
                run = RunConfig(run.system, run.geometry, run.pathloss, spec.with_(sweep="P_tot"))
            rows = run_detection_validation(run, fix_placement=args.fix_placement)
            xlabel, name = _XLABEL["P_tot"], f"{spec.name}_detect"
        paths = emit_outputs(rows, name, spec.outputs, xlabel, svg=not args.no_svg)
    except IsacError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
