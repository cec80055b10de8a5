from __future__ import annotations

import argparse
import logging
import sys
import tempfile
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path

from dotenv import load_dotenv

from warmslice.backends.cpu_max import CpuMaxBackend
from warmslice.backends.file import FileLimitBackend
from warmslice.config import ConfigError, Settings
from warmslice.cpu import NodeSpec
from warmslice.engine import simulate_replications, summarize
from warmslice.errors import (
    CalibrationFormatError,
    EmptyInputError,
    InvalidInputError,
    NotFoundError,
    WarmsliceError,
)
from warmslice.orchestrator import (
    DEFAULT_SLACK_MS,
    FixedLatency,
    LatencySource,
    MockOrchestrator,
    SampledLatency,
)
from warmslice.plots import FIGURES, dump_series, plot_data
from warmslice.policies import PolicyConfig, PolicyKind
from warmslice.reports import ReportRow, build_report, format_report
from warmslice.resize_model import LoadState, default_table
from warmslice.results import ResultStore, SummaryDocument, load_summary
from warmslice.rng import ALGORITHM, seeded_generator
from warmslice.scenario import DEFAULT_SEED, ScenarioConfig, load_scenario
from warmslice.workloads import (
    ArrivalPlan,
    ClosedLoop,
    ResizePlan,
    calibrated_overheads,
    fine_plan,
    load_plan,
    table2_suite,
    workload_catalog,
)

logger = logging.getLogger(__name__)

VALIDATION_ERRORS = (
    ConfigError,
    InvalidInputError,
    NotFoundError,
    CalibrationFormatError,
    EmptyInputError,
)
GRID_POLICIES = (
    PolicyKind.DEFAULT,
    PolicyKind.WARM,
    PolicyKind.INPLACE,
    PolicyKind.COLD,
)
# Cold requests must land after the idle instance has been scaled to zero.
COLD_THINK_MARGIN_MS = 4000.0


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1 like every other validation error."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def configure_logging(settings: Settings) -> None:
    handler = logging.StreamHandler()
    handler.setFormatter(
        logging.Formatter("%(asctime)s - %(levelname)s - %(name)s - %(message)s")
    )
    logging.basicConfig(level=settings.log_level, handlers=[handler])


def _provenance(seed: int, **fields: object) -> dict[str, object]:
    return {"seed": seed, **fields, "rng": ALGORITHM}


def cmd_simulate(scenario_path: Path, seed: int | None, out_dir: Path) -> int:
    config = load_scenario(scenario_path)
    if seed is not None:
        config = replace(config, seed=seed)
    store = ResultStore(out_dir)
    results = simulate_replications(config)
    for index, result in enumerate(results):
        name = "trace.csv" if len(results) == 1 else f"trace-r{index}.csv"
        store.write_trace(
            name,
            result.records,
            _provenance(
                result.seed,
                policy=config.policy.kind,
                workload=config.workload.name,
            ),
        )
    records = [record for result in results for record in result.records]
    if not records:
        logger.warning("No request completed; summary.json was not written")
        return 0
    stats = summarize(records, failed=sum(len(result.failures) for result in results))
    store.write_summary(
        "summary.json",
        SummaryDocument(
            workload=config.workload.name,
            policy=config.policy.kind.value,
            seed=config.seed,
            runtime_ms=config.workload.runtime_at_1000m,
            stats=stats,
        ),
    )
    logger.info(
        "%s under %s: mean %.3f ms over %d requests",
        config.workload.name,
        config.policy.kind,
        stats.mean_ms,
        stats.count,
    )
    return 0


def _resolve_plans(selector: str, *, table_variant: bool) -> list[ResizePlan]:
    if selector == "table2":
        return table2_suite(table_variant=table_variant)
    if selector == "fine":
        return list(fine_plan())
    path = Path(selector)
    if not path.is_file():
        raise NotFoundError(
            f"plan must be 'table2', 'fine' or a CSV file: {selector}"
        )
    return [load_plan(path)]


def _latency_source(spec: str, seed: int) -> LatencySource:
    kind, _, value = spec.partition(":")
    if kind == "fixed":
        try:
            return FixedLatency(float(value))
        except ValueError as error:
            raise InvalidInputError(f"invalid fixed latency: {value!r}") from error
    if kind == "sampled":
        try:
            load = LoadState(value or LoadState.IDLE)
        except ValueError as error:
            raise InvalidInputError(f"unknown load state: {value!r}") from error
        return SampledLatency(default_table(), load, seeded_generator(seed))
    raise InvalidInputError("latency must be fixed:<ms> or sampled:<load>")


def cmd_resize_bench(
    plan_selector: str,
    poll_us: int,
    repetitions: int,
    out_dir: Path,
    *,
    latency: str = "sampled:idle",
    seed: int = DEFAULT_SEED,
    table_variant: bool = False,
    backend: str = "file",
    watch_timeout_seconds: float = 30.0,
) -> int:
    plans = _resolve_plans(plan_selector, table_variant=table_variant)
    source = _latency_source(latency, seed)
    limit_backend = CpuMaxBackend() if backend == "cpu.max" else FileLimitBackend()
    store = ResultStore(out_dir)
    with (
        tempfile.TemporaryDirectory(dir=store.directory()) as workdir,
        MockOrchestrator(
            Path(workdir),
            backend=limit_backend,
            watch_timeout_seconds=watch_timeout_seconds,
        ) as orchestrator,
    ):
        for plan in plans:
            logger.info(
                "Running plan %s (%d timed steps)",
                plan.plan_id,
                len(plan.timed_steps),
            )
            measurements = orchestrator.run_plan(plan, source, poll_us, repetitions)
            store.write_measurements(
                f"{plan.plan_id}.csv",
                measurements,
                _provenance(
                    seed,
                    latency=latency,
                    poll_us=poll_us,
                    slack_ms=DEFAULT_SLACK_MS,
                ),
            )
    return 0


def cmd_report(
    baseline_paths: Sequence[Path], input_paths: Sequence[Path]
) -> list[ReportRow]:
    baselines = [load_summary(path) for path in baseline_paths]
    summaries = [load_summary(path) for path in input_paths]
    return build_report(baselines, summaries)


def _write_report(store: ResultStore, rows: list[ReportRow]) -> str:
    text = format_report(rows)
    store.write_text("report.txt", text)
    store.write_json("report.json", [row.to_json() for row in rows])
    return text


def cmd_plot_data(figure: str, inputs: Sequence[Path], out: Path) -> int:
    points = plot_data(figure, inputs)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(dump_series(points), encoding="utf-8")
    logger.info("Wrote %d %s points to %s", len(points), figure, out)
    return 0


def grid_scenario(
    workload: str, policy: PolicyKind, *, iterations: int, seed: int
) -> ScenarioConfig:
    """Single-client scenario with the workload's calibrated overheads."""
    spec = workload_catalog().spec(workload)
    overheads = calibrated_overheads(workload)
    if policy is PolicyKind.DEFAULT:
        policy_config = PolicyConfig(kind=policy)
    else:
        policy_config = PolicyConfig(
            kind=policy,
            cold_start_ms=overheads.cold_start_ms,
            platform_overhead_ms=overheads.platform_overhead_ms,
        )
    think_time_ms = 0.0
    if policy is PolicyKind.COLD:
        think_time_ms = policy_config.stable_window_ms + COLD_THINK_MARGIN_MS
    return ScenarioConfig(
        node=NodeSpec(),
        policy=policy_config,
        workload=spec,
        driver=ArrivalPlan(
            ClosedLoop(vus=1, iterations=iterations, think_time_ms=think_time_ms),
            workload,
        ),
        seed=seed,
    )


def cmd_grid(
    workloads: Sequence[str], iterations: int, seed: int, out_dir: Path
) -> str:
    store = ResultStore(out_dir)
    baselines: list[SummaryDocument] = []
    summaries: list[SummaryDocument] = []
    for workload in workloads:
        for policy in GRID_POLICIES:
            config = grid_scenario(workload, policy, iterations=iterations, seed=seed)
            (result,) = simulate_replications(config)
            summary = SummaryDocument(
                workload=workload,
                policy=policy.value,
                seed=seed,
                runtime_ms=config.workload.runtime_at_1000m,
                stats=summarize(result.records, failed=len(result.failures)),
            )
            store.write_summary(f"summary-{policy.value}-{workload}.json", summary)
            if policy is PolicyKind.DEFAULT:
                baselines.append(summary)
            else:
                summaries.append(summary)
    return _write_report(store, build_report(baselines, summaries))


def build_parser(settings: Settings) -> ArgumentParser:
    parser = ArgumentParser(
        prog="warmslice",
        description="Cold, warm and in-place scaling policy lab.",
    )
    commands = parser.add_subparsers(
        dest="command", required=True, parser_class=ArgumentParser
    )

    simulate = commands.add_parser("simulate", help="run one scenario")
    simulate.add_argument("--scenario", type=Path, required=True)
    simulate.add_argument("--seed", type=int)
    simulate.add_argument("--out", type=Path, default=settings.out_dir)

    bench = commands.add_parser("resize-bench", help="measure resize plans")
    bench.add_argument("--plan", required=True, help="table2, fine or a plan CSV")
    bench.add_argument("--poll-us", type=int, default=settings.poll_interval_us)
    bench.add_argument("--reps", type=int, default=settings.repetitions)
    bench.add_argument("--out", type=Path, default=settings.out_dir)
    bench.add_argument(
        "--latency",
        default="sampled:idle",
        help="fixed:<ms> or sampled:<idle|stress_cpu|stress_io>",
    )
    bench.add_argument("--seed", type=int, default=DEFAULT_SEED)
    bench.add_argument("--table-variant", action="store_true")
    bench.add_argument("--backend", choices=("file", "cpu.max"), default="file")

    report = commands.add_parser("report", help="normalize summaries")
    report.add_argument("--baseline", type=Path, nargs="+", required=True)
    report.add_argument("--inputs", type=Path, nargs="+", required=True)
    report.add_argument("--out", type=Path, default=settings.out_dir)

    plot = commands.add_parser("plot-data", help="emit x,y,group series")
    plot.add_argument("--figure", required=True, help=", ".join(FIGURES))
    plot.add_argument("--inputs", type=Path, nargs="*", default=[])
    plot.add_argument("--out", type=Path, required=True)

    grid = commands.add_parser("grid", help="all policies over the catalog")
    grid.add_argument(
        "--workloads", nargs="+", default=list(workload_catalog().names())
    )
    grid.add_argument("--iterations", type=int, default=50)
    grid.add_argument("--seed", type=int, default=DEFAULT_SEED)
    grid.add_argument("--out", type=Path, default=settings.out_dir)
    return parser


def _run(args: argparse.Namespace, settings: Settings) -> int:
    match args.command:
        case "simulate":
            return cmd_simulate(args.scenario, args.seed, args.out)
        case "resize-bench":
            if args.poll_us <= 0 or args.reps <= 0:
                raise InvalidInputError("--poll-us and --reps must be positive")
            return cmd_resize_bench(
                args.plan,
                args.poll_us,
                args.reps,
                args.out,
                latency=args.latency,
                seed=args.seed,
                table_variant=args.table_variant,
                backend=args.backend,
                watch_timeout_seconds=settings.watch_timeout_seconds,
            )
        case "report":
            rows = cmd_report(args.baseline, args.inputs)
            sys.stdout.write(_write_report(ResultStore(args.out), rows))
            return 0
        case "plot-data":
            return cmd_plot_data(args.figure, args.inputs, args.out)
        case "grid":
            if args.iterations <= 0:
                raise InvalidInputError("--iterations must be positive")
            text = cmd_grid(args.workloads, args.iterations, args.seed, args.out)
            sys.stdout.write(text)
            return 0
    raise InvalidInputError(f"unknown command {args.command}")


def main(argv: Sequence[str] | None = None) -> int:
    load_dotenv()
    try:
        settings = Settings.from_env()
    except ConfigError as error:
        sys.stderr.write(f"warmslice: {error}\n")
        return 1
    configure_logging(settings)
    args = build_parser(settings).parse_args(argv)
    try:
        return _run(args, settings)
    except VALIDATION_ERRORS as error:
        logger.error("%s", error)
        return 1
    except (WarmsliceError, OSError) as error:
        logger.error("%s", error)
        return 2
    except Exception:
        logger.exception("warmslice %s failed", args.command)
        return 2
