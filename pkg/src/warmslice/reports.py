"""Relative-latency tables normalized to the always-on baseline."""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import asdict, dataclass
from typing import Any

from warmslice.cpu import relative_latency
from warmslice.errors import EmptyInputError, InvalidInputError
from warmslice.policies import PolicyKind
from warmslice.results import SummaryDocument

RATIO_POLICIES = (
    PolicyKind.DEFAULT,
    PolicyKind.WARM,
    PolicyKind.INPLACE,
    PolicyKind.COLD,
)


@dataclass(frozen=True)
class ReportRow:
    workload: str
    runtime_ms: float
    default_mean_ms: float
    warm_mean_ms: float | None = None
    inplace_mean_ms: float | None = None
    cold_mean_ms: float | None = None
    warm_ratio: float | None = None
    inplace_ratio: float | None = None
    cold_ratio: float | None = None
    default_ratio: float = 1.0
    inplace_over_warm: float | None = None

    def ratio(self, policy: PolicyKind) -> float | None:
        return getattr(self, f"{policy.value}_ratio")

    def to_json(self) -> dict[str, Any]:
        return asdict(self)


def build_report(
    baselines: Iterable[SummaryDocument],
    summaries: Iterable[SummaryDocument],
) -> list[ReportRow]:
    """Normalize each policy summary by its workload's baseline mean.

    Rows follow the order of ``baselines``; a summary whose workload has no
    baseline is rejected.
    """
    baseline_by_workload: dict[str, SummaryDocument] = {}
    for baseline in baselines:
        if baseline.workload in baseline_by_workload:
            raise InvalidInputError(f"two baselines for {baseline.workload}")
        baseline_by_workload[baseline.workload] = baseline
    if not baseline_by_workload:
        raise EmptyInputError("a report needs at least one baseline summary")

    means: dict[str, dict[PolicyKind, float]] = {
        workload: {} for workload in baseline_by_workload
    }
    for summary in summaries:
        if summary.workload not in baseline_by_workload:
            raise InvalidInputError(f"no baseline summary for {summary.workload}")
        try:
            policy = PolicyKind(summary.policy)
        except ValueError as error:
            raise InvalidInputError(f"unknown policy {summary.policy!r}") from error
        if policy is PolicyKind.DEFAULT:
            continue
        means[summary.workload][policy] = summary.stats.mean_ms

    rows: list[ReportRow] = []
    for workload, baseline in baseline_by_workload.items():
        default_mean = baseline.stats.mean_ms
        policy_means = means[workload]
        ratios = {
            policy: relative_latency(mean, default_mean)
            for policy, mean in policy_means.items()
        }
        warm = policy_means.get(PolicyKind.WARM)
        inplace = policy_means.get(PolicyKind.INPLACE)
        rows.append(
            ReportRow(
                workload=workload,
                runtime_ms=baseline.runtime_ms,
                default_mean_ms=default_mean,
                warm_mean_ms=warm,
                inplace_mean_ms=inplace,
                cold_mean_ms=policy_means.get(PolicyKind.COLD),
                warm_ratio=ratios.get(PolicyKind.WARM),
                inplace_ratio=ratios.get(PolicyKind.INPLACE),
                cold_ratio=ratios.get(PolicyKind.COLD),
                inplace_over_warm=(
                    relative_latency(inplace, warm)
                    if inplace is not None and warm is not None
                    else None
                ),
            )
        )
    return rows


def _cell(value: float | None, digits: int) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def format_report(rows: Iterable[ReportRow]) -> str:
    header = ["workload", *(policy.value for policy in RATIO_POLICIES)]
    header += [f"{policy.value}_ms" for policy in RATIO_POLICIES]
    header.append("inplace/warm")
    table = [header]
    for row in rows:
        table.append(
            [
                row.workload,
                *(_cell(row.ratio(policy), 2) for policy in RATIO_POLICIES),
                _cell(row.default_mean_ms, 2),
                _cell(row.warm_mean_ms, 2),
                _cell(row.inplace_mean_ms, 2),
                _cell(row.cold_mean_ms, 2),
                _cell(row.inplace_over_warm, 3),
            ]
        )
    widths = [max(len(line[column]) for line in table) for column in range(len(header))]
    lines = []
    for line in table:
        cells = [line[0].ljust(widths[0])]
        cells += [
            cell.rjust(width)
            for cell, width in zip(line[1:], widths[1:], strict=True)
        ]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"
