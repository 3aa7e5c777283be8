"""Command-line entry points: run experiments, list benchmarks, re-export
recorded runs, and serve the interactive session API."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

OUT_DIR_ENV = "SKEWPBO_OUT_DIR"


def _resolve_out_dir(explicit: str | None, config_value: str | None) -> Path:
    if os.environ.get(OUT_DIR_ENV):
        return Path(os.environ[OUT_DIR_ENV])
    if explicit:
        return Path(explicit)
    if config_value:
        return Path(config_value)
    return Path("runs")


def _cmd_run(args) -> int:
    from .harness import ExperimentConfig, export_results, run_pbo

    config = ExperimentConfig.from_json_file(args.config)
    out_dir = _resolve_out_dir(args.out, config.out_dir)
    records = run_pbo(config)
    written = export_results(records, out_dir, config, fmt=args.format)
    n_failed = sum(r.failed for r in records)
    print(f"{len(records)} trials ({n_failed} failed) -> {out_dir}")
    for name, path in sorted(written.items()):
        print(f"  {name}: {path}")
    return 0 if n_failed == 0 else 1


def _cmd_bench_list(_args) -> int:
    from .benchmarks import builtin_benchmark, list_benchmarks

    for name in list_benchmarks():
        b = builtin_benchmark(name)
        bounds = ", ".join(f"[{lo:g}, {hi:g}]" for lo, hi in b.bounds)
        extras = []
        if b.optimum_value is not None:
            extras.append(f"optimum {b.optimum_value:g}")
        if b.validity is not None:
            extras.append("validity-constrained")
        print(f"{name:15s} dim {b.dim}  bounds {bounds}  {'  '.join(extras)}")
    return 0


def _cmd_export(args) -> int:
    from .harness import export_results, load_records

    config, records = load_records(args.records)
    out_dir = _resolve_out_dir(args.out, config.out_dir)
    written = export_results(records, out_dir, config, fmt=args.format)
    for name, path in sorted(written.items()):
        print(f"{name}: {path}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.data_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skewpbo",
        description="Exact preferential Bayesian optimization with skew "
                    "Gaussian process surrogates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a configured experiment")
    run_p.add_argument("--config", required=True, help="experiment config JSON")
    run_p.add_argument("--out", default=None, help="output directory")
    run_p.add_argument("--format", choices=("csv", "json"), default="csv")
    run_p.set_defaults(fn=_cmd_run)

    bench_p = sub.add_parser("bench", help="benchmark utilities")
    bench_sub = bench_p.add_subparsers(dest="bench_command", required=True)
    bench_list = bench_sub.add_parser("list", help="list built-in benchmarks")
    bench_list.set_defaults(fn=_cmd_bench_list)

    export_p = sub.add_parser("export", help="re-export a recorded run")
    export_p.add_argument("--records", required=True, help="records.json path")
    export_p.add_argument("--format", choices=("csv", "json"), default="csv")
    export_p.add_argument("--out", default=None)
    export_p.set_defaults(fn=_cmd_export)

    serve_p = sub.add_parser("serve", help="start the interactive session service")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8321)
    serve_p.add_argument("--data-dir", default="sessions")
    serve_p.set_defaults(fn=_cmd_serve)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
