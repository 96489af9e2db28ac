"""Command-line entry points: generate/load data, simulate, serve, bench."""

from __future__ import annotations

import argparse
import importlib.resources
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import httpx

from .backends import CaptureBackend, MockChatBackend, RemoteChatBackend, ReplayBackend
from .broker import ContextBroker, Rectangle
from .config import load_config
from .datasets import (
    MADRID_REGION,
    DatasetDescriptor,
    generate_synthetic,
    load_dataset,
    synthetic_entities,
)
from .entities import serialize_entity
from .harness import RunConfig, run_correctness_suite, run_latency_suite
from .reporting import FORMATS, RunResults, emit_report
from .simulator import SimulationScript, run_simulation, write_log

logger = logging.getLogger(__name__)

FIXTURE_RELATIVE = Path("fixtures/madrid_limit10")
FIXTURE_RESOURCE = "resources/madrid_limit10.ndjson"


def _parse_bbox(text: str) -> Rectangle:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("expected min_lon,min_lat,max_lon,max_lat")
    return Rectangle(parts[0], parts[1], parts[2], parts[3])


def _parse_delay(text: str):
    parts = [float(p) for p in text.split(",")]
    if len(parts) == 1:
        return parts[0]
    if len(parts) == 2:
        return (parts[0], parts[1])
    raise argparse.ArgumentTypeError("expected one delay or low,high")


def _parse_limits(text: str) -> tuple:
    try:
        limits = tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError("limits must be integers") from None
    if not limits:
        raise argparse.ArgumentTypeError("need at least one limit")
    return limits


def fixture_path() -> Path:
    """The bundled 10-entity benchmark fixture (repo copy when present)."""
    if FIXTURE_RELATIVE.is_file():
        return FIXTURE_RELATIVE
    resource = importlib.resources.files("spatial_rag").joinpath(FIXTURE_RESOURCE)
    return Path(str(resource))


def _load_into(broker: ContextBroker, dataset: str, seed: int) -> int:
    """Resolve a --dataset value: 'fixture', 'synthetic:N', or a file path."""
    if dataset == "fixture":
        result = load_dataset(DatasetDescriptor(path=fixture_path()), broker)
        return result.loaded
    if dataset.startswith("synthetic:"):
        count = int(dataset.split(":", 1)[1])
        for entity in synthetic_entities(count, seed):
            broker.upsert(entity)
        return count
    result = load_dataset(DatasetDescriptor(path=Path(dataset)), broker)
    if result.record_errors:
        for lineno, message in result.record_errors[:10]:
            logger.warning("%s line %d: %s", dataset, lineno, message)
    return result.loaded


def _cmd_generate(args) -> int:
    region = args.region if args.region is not None else MADRID_REGION
    path = generate_synthetic(
        args.count, args.seed, Path(args.out), region,
        include_landmarks=not args.no_landmarks,
    )
    print(f"wrote {args.count} entities to {path}")
    return 0


def _cmd_load(args) -> int:
    descriptor = DatasetDescriptor(
        path=Path(args.dataset),
        format=args.format,
        expected_count=args.expect,
        mapping_path=Path(args.mapping) if args.mapping else None,
    )
    if args.target:
        loaded = 0
        errors = 0
        from .datasets import iter_entity_records

        with httpx.Client(base_url=args.target, timeout=30.0) as client:
            for lineno, item in iter_entity_records(descriptor.path):
                if isinstance(item, Exception):
                    logger.warning("line %d: %s", lineno, item)
                    errors += 1
                    continue
                response = client.post(
                    "/ngsi-ld/v1/entities",
                    content=serialize_entity(item, "normalized"),
                    headers={"Content-Type": "application/json"},
                )
                if response.status_code not in (201, 204):
                    logger.warning("line %d: target answered %d", lineno, response.status_code)
                    errors += 1
                else:
                    loaded += 1
        print(f"pushed {loaded} entities to {args.target} ({errors} failures)")
        return 0 if errors == 0 else 1
    broker = ContextBroker()
    result = load_dataset(descriptor, broker)
    for lineno, message in result.record_errors:
        logger.warning("line %d: %s", lineno, message)
    print(f"loaded {result.loaded} entities ({len(result.record_errors)} bad records)")
    return 0 if result.ok else 1


def _cmd_simulate(args) -> int:
    script = SimulationScript.from_file(Path(args.script))
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.ticks is not None:
        overrides["ticks"] = args.ticks
    if args.interval is not None:
        overrides["tick_interval_s"] = args.interval
    if overrides:
        script = replace(script, **overrides)

    broker = ContextBroker()
    loaded = _load_into(broker, args.dataset, script.seed)

    if args.target:
        client = httpx.Client(base_url=args.target, timeout=30.0)

        def mirror(record):
            client.post(
                "/ngsi-ld/v1/entities",
                content=serialize_entity(record.entity, "normalized"),
                headers={"Content-Type": "application/json"},
            )

        broker.add_change_listener(mirror)

    events = run_simulation(script, broker, realtime=args.realtime)
    if args.log_out:
        write_log(events, Path(args.log_out))
    print(
        f"simulated {script.ticks} ticks over {loaded} entities:"
        f" {len(events)} mutations (digest {broker.state_digest()[:12]})"
    )
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import build_default_app

    config = load_config(Path(args.config) if args.config else None)
    overrides = {}
    for name in ("host", "port", "backend", "ui_dir"):
        value = getattr(args, name if name != "ui_dir" else "ui", None)
        if value is not None:
            overrides[name] = value
    if args.dataset:
        overrides["dataset_path"] = args.dataset
    if args.cache_bbox:
        overrides["cache_bbox"] = tuple(
            (args.cache_bbox.as_bbox() if isinstance(args.cache_bbox, Rectangle)
             else args.cache_bbox)
        )
    if overrides:
        config = replace(config, **overrides)
    app = build_default_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


def _make_bench_backend(args):
    if args.backend == "remote":
        if not args.remote_url:
            raise SystemExit("--backend remote needs --remote-url")
        backend = RemoteChatBackend(args.remote_url, api_key=args.api_key or None)
    elif args.backend == "replay":
        if not args.replay:
            raise SystemExit("--backend replay needs --replay PATH")
        backend = ReplayBackend(Path(args.replay))
    else:
        sleep = args.mock_sleep if args.mock_sleep is not None else (args.timing == "measured")
        backend = MockChatBackend(
            mode=args.mock_mode,
            delay_ms=args.mock_delay,
            seed=args.seed,
            sleep=sleep,
        )
    if args.capture:
        backend = CaptureBackend(backend, Path(args.capture))
    return backend


def _cmd_bench(args) -> int:
    broker = ContextBroker()
    loaded = _load_into(broker, args.dataset, args.seed)
    backend = _make_bench_backend(args)
    config = RunConfig(
        limits=args.limits,
        repetitions=args.reps,
        seed=args.seed,
        timing=args.timing,
        model=args.model,
    )

    results = RunResults(config=config.snapshot())
    if args.suite == "latency":
        results.latency = run_latency_suite(config, broker, backend)
    else:
        results.correctness = run_correctness_suite(config, broker, backend)

    written = emit_report(results, Path(args.out), tuple(args.formats))
    print(f"dataset: {loaded} entities")
    if results.latency is not None:
        good = [s for s in results.latency.samples if not s.error]
        errors = len(results.latency.samples) - len(good)
        print(f"latency suite: {len(results.latency.samples)} samples ({errors} errors)")
    if results.correctness is not None:
        tally: dict = {}
        for row in results.correctness.rows:
            tally[row.verdict.value.value] = tally.get(row.verdict.value.value, 0) + 1
        summary = ", ".join(f"{k}={v}" for k, v in sorted(tally.items()))
        print(f"correctness suite: {summary}")
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spatial-rag",
        description="Spatial RAG toolkit: data, simulation, service, benchmarks",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    commands = parser.add_subparsers(dest="command", required=True)

    generate = commands.add_parser("generate", help="write a synthetic NDJSON corpus")
    generate.add_argument("--out", required=True)
    generate.add_argument("--count", type=int, required=True)
    generate.add_argument("--seed", type=int, default=7)
    generate.add_argument("--region", type=_parse_bbox, default=None,
                          metavar="MINLON,MINLAT,MAXLON,MAXLAT")
    generate.add_argument("--no-landmarks", action="store_true")
    generate.set_defaults(fn=_cmd_generate)

    load = commands.add_parser("load", help="validate a dataset or push it to a service")
    load.add_argument("--dataset", required=True)
    load.add_argument("--format", choices=("entity-records", "tabular"),
                      default="entity-records")
    load.add_argument("--mapping", default=None)
    load.add_argument("--expect", type=int, default=None)
    load.add_argument("--target", default=None, help="base URL of a running service")
    load.set_defaults(fn=_cmd_load)

    simulate = commands.add_parser("simulate", help="run a scripted update simulation")
    simulate.add_argument("--dataset", required=True,
                          help="'fixture', 'synthetic:N', or an NDJSON path")
    simulate.add_argument("--script", required=True)
    simulate.add_argument("--seed", type=int, default=None)
    simulate.add_argument("--ticks", type=int, default=None)
    simulate.add_argument("--interval", type=float, default=None)
    simulate.add_argument("--realtime", action="store_true")
    simulate.add_argument("--log-out", default=None)
    simulate.add_argument("--target", default=None,
                          help="mirror every mutation to this service base URL")
    simulate.set_defaults(fn=_cmd_simulate)

    serve = commands.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--config", default=None)
    serve.add_argument("--host", default=None)
    serve.add_argument("--port", type=int, default=None)
    serve.add_argument("--backend", choices=("mock", "remote", "replay"), default=None)
    serve.add_argument("--dataset", default=None)
    serve.add_argument("--ui", default=None, help="directory of built UI assets")
    serve.add_argument("--cache-bbox", type=_parse_bbox, default=None)
    serve.set_defaults(fn=_cmd_serve)

    bench = commands.add_parser("bench", help="run a benchmark suite")
    bench.add_argument("suite", choices=("latency", "correctness"))
    bench.add_argument("--out", required=True)
    bench.add_argument("--limits", type=_parse_limits, default=(10, 100, 650))
    bench.add_argument("--reps", type=int, default=10)
    bench.add_argument("--seed", type=int, default=7)
    bench.add_argument("--dataset", default=None,
                       help="'fixture', 'synthetic:N', or an NDJSON path"
                            " (default: fixture for correctness, synthetic:1088 for latency)")
    bench.add_argument("--backend", choices=("mock", "remote", "replay"), default="mock")
    bench.add_argument("--timing", choices=("measured", "reported"), default="measured")
    bench.add_argument("--mock-mode", choices=("fixed", "echo", "oracle"), default="oracle")
    bench.add_argument("--mock-delay", type=_parse_delay, default=(1109.0, 1928.0),
                       metavar="MS|LOW,HIGH")
    bench.add_argument("--mock-sleep", action=argparse.BooleanOptionalAction, default=None)
    bench.add_argument("--remote-url", default=None)
    bench.add_argument("--api-key", default=None)
    bench.add_argument("--replay", default=None)
    bench.add_argument("--capture", default=None,
                       help="record every exchange to this NDJSON transcript")
    bench.add_argument("--model", default="gpt-4.1-2025-04-14")
    bench.add_argument("--formats", nargs="+", choices=FORMATS, default=list(FORMATS))
    bench.set_defaults(fn=_cmd_bench)

    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "bench" and args.dataset is None:
        args.dataset = "synthetic:1088" if args.suite == "latency" else "fixture"
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
