"""Tidy ``x,y,group`` series for external plotting tools."""

from __future__ import annotations

import csv
import io
import re
from collections import defaultdict
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from warmslice.cpu import relative_latency
from warmslice.errors import EmptyInputError, InvalidInputError
from warmslice.orchestrator import Measurement, parse_measurements
from warmslice.policies import PolicyKind
from warmslice.results import SummaryDocument, load_summary

PLAN_ID_PATTERN = re.compile(r"^(?P<step>\d+)m-[a-z]+-(?P<direction>up|down)-")


@dataclass(frozen=True)
class PlotPoint:
    x: float | str
    y: float
    group: str


def _plan_shape(plan_id: str) -> tuple[int, str] | None:
    match = PLAN_ID_PATTERN.match(plan_id)
    if match is None:
        return None
    return int(match["step"]), match["direction"]


def _plans_where(
    predicate: Callable[[int, str], bool],
) -> Callable[[Measurement], bool]:
    def accept(item: Measurement) -> bool:
        shape = _plan_shape(item.plan_id)
        return shape is None or predicate(*shape)

    return accept


def interval_series(
    measurements: Iterable[Measurement],
    accept: Callable[[Measurement], bool] = lambda item: True,
) -> list[PlotPoint]:
    """Mean measured duration per (plan, interval), in plan order."""
    grouped: dict[tuple[str, int, int], list[float]] = defaultdict(list)
    for item in sorted(measurements, key=lambda item: (item.plan_id, item.step_index)):
        if accept(item):
            grouped[(item.plan_id, item.from_cpu, item.to_cpu)].append(item.measured_ms)
    return [
        PlotPoint(f"{from_cpu}m-{to_cpu}m", float(np.mean(values)), plan_id)
        for (plan_id, from_cpu, to_cpu), values in grouped.items()
    ]


def fine_series(
    measurements: Iterable[Measurement], *, upward: bool
) -> list[PlotPoint]:
    """Mean measured duration per target value of the fine-grained plans."""
    grouped: dict[tuple[str, int], list[float]] = defaultdict(list)
    for item in measurements:
        shape = _plan_shape(item.plan_id)
        if shape is not None and shape[0] != 5:
            continue
        if (item.to_cpu > item.from_cpu) == upward:
            grouped[(item.plan_id, item.to_cpu)].append(item.measured_ms)
    return [
        PlotPoint(to_cpu, float(np.mean(values)), plan_id)
        for (plan_id, to_cpu), values in sorted(grouped.items())
    ]


def policy_series(summaries: Iterable[SummaryDocument]) -> list[PlotPoint]:
    return [
        PlotPoint(summary.workload, summary.stats.mean_ms, summary.policy)
        for summary in summaries
    ]


def runtime_series(summaries: Iterable[SummaryDocument]) -> list[PlotPoint]:
    """In-place latency relative to the baseline against the baseline runtime."""
    by_workload: dict[str, dict[str, SummaryDocument]] = defaultdict(dict)
    for summary in summaries:
        by_workload[summary.workload][summary.policy] = summary
    points = []
    for policies in by_workload.values():
        baseline = policies.get(PolicyKind.DEFAULT.value)
        inplace = policies.get(PolicyKind.INPLACE.value)
        if baseline is None or inplace is None:
            continue
        ratio = relative_latency(inplace.stats.mean_ms, baseline.stats.mean_ms)
        points.append(PlotPoint(baseline.runtime_ms, ratio, PolicyKind.INPLACE.value))
    return sorted(points, key=lambda point: point.x)


MEASUREMENT_FIGURES: dict[str, Callable[[list[Measurement]], list[PlotPoint]]] = {
    "fig2": lambda items: interval_series(
        items, _plans_where(lambda step, direction: step == 100 and direction == "up")
    ),
    "fig3": lambda items: interval_series(
        items, _plans_where(lambda step, direction: step == 100 and direction == "down")
    ),
    "fig4": lambda items: interval_series(
        items, _plans_where(lambda step, direction: step == 1000)
    ),
    "fig5a": lambda items: fine_series(items, upward=True),
    "fig5b": lambda items: fine_series(items, upward=False),
}
SUMMARY_FIGURES: dict[str, Callable[[list[SummaryDocument]], list[PlotPoint]]] = {
    "fig6": policy_series,
    "fig7": runtime_series,
}
FIGURES = (*MEASUREMENT_FIGURES, *SUMMARY_FIGURES)


def plot_data(figure: str, inputs: Sequence[Path]) -> list[PlotPoint]:
    if figure not in FIGURES:
        raise InvalidInputError(
            f"unknown figure {figure!r}; valid figures: {', '.join(FIGURES)}"
        )
    if not inputs:
        raise EmptyInputError("no input files given")
    if figure in MEASUREMENT_FIGURES:
        measurements = [
            item
            for path in inputs
            for item in parse_measurements(path.read_text(encoding="utf-8"))
        ]
        points = MEASUREMENT_FIGURES[figure](measurements)
    else:
        points = SUMMARY_FIGURES[figure]([load_summary(path) for path in inputs])
    if not points:
        raise EmptyInputError(f"the inputs hold no data for {figure}")
    return points


def dump_series(points: Iterable[PlotPoint]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(("x", "y", "group"))
    for point in points:
        writer.writerow([point.x, repr(point.y), point.group])
    return buffer.getvalue()
