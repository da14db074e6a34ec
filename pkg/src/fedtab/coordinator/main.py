"""Command-line entry point for the coordinator service."""

from __future__ import annotations

import argparse

import uvicorn

from .app import configure_logging, create_app
from .state import Coordinator, CoordinatorConfig


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fedtab-coordinator",
        description="Federated-averaging coordinator service.",
    )
    parser.add_argument("--config", required=True, help="path to coordinator JSON config")
    parser.add_argument("--host", default=None, help="override config host")
    parser.add_argument("--port", type=int, default=None, help="override config port")
    args = parser.parse_args(argv)

    configure_logging()
    config = CoordinatorConfig.from_json(args.config)
    host = args.host if args.host is not None else config.host
    port = args.port if args.port is not None else config.port
    app = create_app(Coordinator(config))
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
