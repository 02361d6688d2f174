"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 campaign finished with
failed blocks.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .campaign import FULL_SCALE, anchor_check, resolve_constellation, run_b2b_snr, run_block_campaign, run_sweeps
from .channel import transmittance_from_distance
from .config import load_config
from .errors import ConfigError
from .estimation import EstimatedParams, excess_noise_alice
from .keyrate import SecurityParams, evaluate

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILED_BLOCKS = 3


def build_parser():
    parser = argparse.ArgumentParser(prog="pcsqkd", description="Shaped-QAM CV-QKD link simulator")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    common.add_argument("--output-dir", help="directory for CSV/JSON artifacts (default: run.output_dir)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("epsprep-sweep", parents=[common], help="preparation error versus V_A or cardinality")
    p.add_argument("--axis", choices=["VA", "cardinality"], default="VA")

    sub.add_parser("b2b", parents=[common], help="back-to-back ideal versus DSP SNR")

    p = sub.add_parser("campaign", parents=[common], help="multi-block end-to-end campaign")
    p.add_argument("--full-scale", action="store_true", help="paper-scale block length and block count")
    p.add_argument("--blocks", type=int, help="number of blocks (overrides run.blocks)")
    p.add_argument("--workers", type=int, help="worker processes (overrides run.workers)")

    p = sub.add_parser("rolloff-sweep", parents=[common], help="excess noise versus RRC roll-off")
    p.add_argument("--blocks-per-point", type=int, default=1)

    sub.add_parser("distance-sweep", parents=[common], help="secret fraction versus distance")

    sub.add_parser("keyrate", parents=[common], help="key rate for given parameters (no simulation)")
    return parser


def _output_dir(args, config):
    return args.output_dir or config["run.output_dir"]


def _keyrate(config):
    _, _, eps_value = resolve_constellation(config)
    security = SecurityParams(eps_total=config["security.eps_total"], eps_prep=eps_value,
                              beta=config["security.beta"])
    eta, V_el, xi = config["channel.eta"], config["channel.V_el"], config["keyrate.xi_B"]
    T = transmittance_from_distance(config["channel.distance_km"], config["channel.loss_db_per_km"])
    params = EstimatedParams(V_A=config["constellation.V_A"], T_hat=T, eta=eta, V_el=V_el, xi_B_hat=xi,
                             xi_A_hat=excess_noise_alice(xi, eta, T), N=int(config["keyrate.N"]))
    out = {"T": T, "eps_prep": eps_value, "config_hash": config.config_hash}
    for regime in ("finite-size", "asymptotic"):
        r = evaluate(params, security, regime, config["tx.symbol_rate"], config["frame.pilot_fraction"])
        out[regime] = {"I_AB": r.I_AB, "chi_BE": r.chi_BE, "delta_n": r.delta_n,
                       "secret_fraction": r.secret_fraction, "skr_bps": r.skr_bps, "xi_B_used": r.xi_B_used}
    out["anchors"] = anchor_check(config, eps_value)
    return out


def run(args):
    assignments = list(args.set)
    if getattr(args, "full_scale", False):
        assignments = [f"{k}={v}" for k, v in FULL_SCALE.items()] + assignments
    if getattr(args, "blocks", None) is not None:
        assignments.append(f"run.blocks={args.blocks}")
    if getattr(args, "workers", None) is not None:
        assignments.append(f"run.workers={args.workers}")
    config = load_config(args.config, assignments)
    config.validate()
    out = _output_dir(args, config)

    if args.command == "campaign":
        rows, summary = run_block_campaign(config, out)
        print(json.dumps({k: summary[k] for k in ("blocks", "blocks_ok", "xi_B_hat", "SKR_bps")}, indent=2))
        return EXIT_FAILED_BLOCKS if summary["blocks_ok"] < summary["blocks"] else EXIT_OK
    if args.command == "b2b":
        rows = run_b2b_snr(config, output_dir=out)
    elif args.command == "epsprep-sweep":
        rows = run_sweeps(config, args.axis, output_dir=out)
    elif args.command == "rolloff-sweep":
        rows = run_sweeps(config, "rolloff", output_dir=out, blocks_per_point=args.blocks_per_point)
    elif args.command == "distance-sweep":
        rows = run_sweeps(config, "distance", output_dir=out)
    else:
        print(json.dumps(_keyrate(config), indent=2, default=float))
        return EXIT_OK
    for row in rows:
        print(",".join(str(v) for v in row.values()))
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
