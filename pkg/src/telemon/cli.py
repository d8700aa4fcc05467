"""Command-line entry points: the cohort simulator and the API server."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import load_config
from .simulator import (
    CohortSpec,
    HttpDriver,
    InProcessDriver,
    InvalidSpec,
    SimulationInvariantViolation,
    report_out,
    run,
)

MIX_KEYS = {
    "stable": "p_stable",
    "deteriorating": "p_deteriorating",
    "quarantine": "p_quarantine_issue",
    "nonresponder": "p_nonresponder",
}


def parse_mix(text: str) -> dict:
    out = {}
    for part in text.split(","):
        if not part.strip():
            continue
        name, _, value = part.partition("=")
        if name.strip() not in MIX_KEYS:
            raise argparse.ArgumentTypeError(
                f"unknown mix component {name!r}; expected {sorted(MIX_KEYS)}"
            )
        out[MIX_KEYS[name.strip()]] = float(value)
    return out


def simulate_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="telemon-simulate",
        description="Run a synthetic monitoring cohort against the service and "
        "report the automated-vs-human workload split.",
    )
    parser.add_argument("--patients", type=int, required=True)
    parser.add_argument("--days", type=int, required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--mix",
        type=parse_mix,
        default={},
        help="e.g. stable=0.3,deteriorating=0.1,quarantine=0.05,nonresponder=0.1",
    )
    parser.add_argument("--reports-per-day", type=int, default=2, choices=(1, 2))
    parser.add_argument("--out", type=Path, default=None, help="write report here")
    parser.add_argument("--format", choices=("json", "csv", "text"), default="json")
    parser.add_argument("--config", type=Path, default=None, help="deployment config file")
    parser.add_argument("--log-file", type=Path, default=None,
                        help="event log path (in-process mode; default in-memory)")
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument("--endpoint", help="base URL of a running service")
    mode.add_argument("--in-process", action="store_true", default=True)
    parser.add_argument("--gateway-file", type=Path, default=None,
                        help="gateway sink of the remote service (with --endpoint)")
    args = parser.parse_args(argv)

    spec = CohortSpec(
        n_patients=args.patients,
        days=args.days,
        seed=args.seed,
        reports_per_day=args.reports_per_day,
        **args.mix,
    )
    try:
        if args.endpoint:
            if args.gateway_file is None:
                parser.error("--endpoint requires --gateway-file")
            driver = HttpDriver(args.endpoint, args.gateway_file)
        else:
            driver = InProcessDriver(
                load_config(args.config) if args.config else None,
                log_path=args.log_file,
            )
        try:
            report = run(spec, driver)
        finally:
            driver.close()
    except (InvalidSpec, SimulationInvariantViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            report_out(report, args.format, fh)
    else:
        report_out(report, args.format, sys.stdout)
    return 0


def serve_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="telemon-serve", description="Run the Command Centre HTTP service."
    )
    parser.add_argument("--config", type=Path, default=None)
    parser.add_argument("--log-file", type=Path, default=Path("events.log"))
    parser.add_argument("--gateway-file", type=Path, default=Path("outbound.jsonl"))
    parser.add_argument("--snapshot-file", type=Path, default=None)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    args = parser.parse_args(argv)

    import uvicorn

    from .api import create_app
    from .eventstore import EventLog
    from .notifier import FileGateway
    from .service import CommandCentre

    centre = CommandCentre(
        load_config(args.config),
        log=EventLog(args.log_file),
        gateway=FileGateway(args.gateway_file),
        snapshot_path=args.snapshot_file,
    )
    uvicorn.run(create_app(centre), host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    sys.exit(simulate_main())
