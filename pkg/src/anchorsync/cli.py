"""``anchorsync`` command line: sweep, scale, diagnose, register, selftest."""

from __future__ import annotations

import argparse
import sys

from . import experiments as ex
from .diagnostics import report_csv
from .errors import ConfigError, DiagnosticsUnavailableError

SUBCOMMAND_KINDS = {
    "sweep": None,  # sweep-sigma1 or sweep-sigma2, from config or inferred
    "scale": ex.SCALE_N,
    "diagnose": ex.DIAGNOSTICS,
    "register": ex.REGISTER,
    "selftest": ex.SELFTEST,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anchorsync",
        description="Anchored spectral synchronization over SE(d): experiments and checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMAND_KINDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value config file; flags override its entries")
        p.add_argument("--seed", type=int)
        p.add_argument("--n", help="problem size, or comma-separated sizes for scale")
        p.add_argument("--d", type=int)
        p.add_argument("--sigma1", help="rotation noise level(s), comma-separated for a sweep")
        p.add_argument("--sigma2", help="translation noise level(s), comma-separated for a sweep")
        p.add_argument("--trials", type=int)
        p.add_argument("--methods", help="comma-separated: ase,two-stage,naive,naive-noflip")
        p.add_argument("--out", help="output CSV path (stdout if omitted)")
        p.add_argument("--threads", type=int)
        p.add_argument("--kind", help="experiment kind, for sweep: sweep-sigma1 or sweep-sigma2")
        p.add_argument("--translation-scale", dest="translation_scale", type=float)
        p.add_argument("--timing", action="store_const", const=True, default=None,
                       help="fill the wall_ms column (breaks byte-identical reruns)")
        if name == "register":
            p.add_argument("--scans", type=int)
            p.add_argument("--points", type=int)
            p.add_argument("--max-angle-deg", dest="max_angle_deg", type=float)
            p.add_argument("--trans-sigma-mm", dest="trans_sigma_mm", type=float)
            p.add_argument("--icp-iters", dest="icp_iters", type=int)
        if name == "selftest":
            p.add_argument("--inject-fault", action="store_true",
                           help="corrupt the data-matrix assembly to exercise failure reporting")
    return parser


_NON_CONFIG = {"command", "config", "inject_fault"}


def config_from_args(args) -> ex.ExperimentConfig:
    overrides = {k: v for k, v in vars(args).items() if k not in _NON_CONFIG and v is not None}
    kind = SUBCOMMAND_KINDS[args.command]
    file_values = {}
    if args.config:
        try:
            with open(args.config) as fh:
                file_values = ex.parse_config_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    requested = overrides.get("kind", file_values.get("kind"))
    if requested is not None and kind is not None and requested != kind:
        raise ConfigError(f"kind {requested!r} does not match the '{args.command}' command")
    if kind is None and requested not in (None, ex.SWEEP_SIGMA1, ex.SWEEP_SIGMA2):
        raise ConfigError(f"kind {requested!r} is not a sweep")
    return ex.make_config(file_values, overrides, kind)


def _emit(text: str, out) -> None:
    if out:
        return
    sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
        if args.command == "sweep":
            _emit(ex.run_sweep(config).to_csv(), config.out)
        elif args.command == "scale":
            _emit(ex.run_scaling(config).to_csv(), config.out)
        elif args.command == "register":
            _emit(ex.run_registration(config).to_csv(), config.out)
        elif args.command == "diagnose":
            checks = ex.run_diagnostics(config)
            _emit(report_csv(checks), config.out)
            if any(c.satisfied is False for c in checks):
                return 1
        else:
            builder = ex.corrupted_omega if args.inject_fault else ex.build_omega
            report = ex.run_selftest(builder, seed=config.seed)
            text = report.table() + "\n"
            if config.out:
                with open(config.out, "w") as fh:
                    fh.write(text)
            sys.stdout.write(text)
            return 0 if report.ok else 1
    except (ConfigError, DiagnosticsUnavailableError) as exc:
        print(f"anchorsync: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
