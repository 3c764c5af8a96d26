"""Command line entry point: ``irhc {simulate,certify,table1,check-bounds}``.

Exit codes: 0 on success, 2 on a configuration error, 3 when the solver or
controller fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiments
from .analysis import Certificate
from .controller import RunRecord
from .errors import CertificationError, ConfigurationError, ControllerError, DimensionError

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE = 0, 2, 3


def _write(out: Path, name: str, text: str):
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n"


def _simulate(args, cfg):
    rec, summary = experiments.simulate(cfg)
    _write(args.out, "trace.csv", rec.to_csv())
    _write(args.out, "summary.json", _dump(summary))
    print(f"{summary['status']}: {summary['steps']} steps, cost {summary['total_cost']:.4f}")
    if rec.error is not None:
        print(f"controller failure at step {rec.error_step}: {rec.error}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def _certify(args, cfg):
    cert = experiments.certify(cfg, args.seed)
    _write(args.out, "certificate.json", _dump(cert.to_dict()))
    print(f"sigma={cert.sigma:.6g} all_feasible={cert.all_feasible} "
          f"({len(cert.itec_infeasible)} budget-infeasible samples)")
    return EXIT_OK


def _table1(args, cfg):
    rows = experiments.table1(cfg)
    _write(args.out, "table1.csv", experiments.format_table1_csv(rows))
    md = experiments.format_table1_markdown(rows)
    for dt in cfg.get("dt_sweep", []):
        sweep = experiments.table1(cfg, dt=dt)
        md += f"\nSensitivity, dt={dt!r}:\n\n" + experiments.format_table1_markdown(sweep)
    _write(args.out, "table1.md", md)
    print(md, end="")
    return EXIT_FAILURE if any(r["status"] == "aborted" for r in rows) else EXIT_OK


def _check_bounds(args, cfg):
    spec = experiments.parse_run_config(cfg)
    record = None
    if args.trace is not None:
        record = RunRecord.from_csv(Path(args.trace).read_text(), system=spec.system)
    certificate = None
    if args.certificate is not None:
        certificate = Certificate.from_dict(json.loads(Path(args.certificate).read_text()))
    report = experiments.check_bounds(cfg, record, certificate, args.seed)
    _write(args.out, "bounds_report.json", _dump(report))
    for name, check in report["checks"].items():
        print(f"{'PASS' if check['pass'] else 'FAIL'} {name}")
    return EXIT_OK


COMMANDS = {
    "simulate": _simulate,
    "certify": _certify,
    "table1": _table1,
    "check-bounds": _check_bounds,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irhc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True,
                       help="JSON config path, or the file name of a shipped config")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="sampling seed (certify, check-bounds)")
        if name == "check-bounds":
            p.add_argument("--trace", help="reuse a trace.csv written by simulate")
            p.add_argument("--certificate", help="reuse a certificate.json written by certify")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = experiments.load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except (ConfigurationError, DimensionError, KeyError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ControllerError, CertificationError, ArithmeticError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
