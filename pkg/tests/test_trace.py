from __future__ import annotations

import tempfile
import unittest
from pathlib import Path

from warmslice.errors import InvalidInputError, NotFinishedError
from warmslice.trace import (
    TRACE_HEADER,
    TraceRecord,
    dump_trace,
    latency_breakdown,
    parse_trace,
    provenance_line,
    read_trace,
    request_latency,
)


def record(**overrides: object) -> TraceRecord:
    fields: dict[str, object] = {
        "request_id": "r000001",
        "workload": "helloworld",
        "policy": "inplace",
        "arrival_ms": 0.0,
        "route_ms": 0.0,
        "exec_start_ms": 0.0,
        "completion_ms": 76.93,
        "instance_id": "i0001",
        "resize_dispatch_ms": 0.0,
        "resize_applied_ms": 56.44,
    }
    fields.update(overrides)
    return TraceRecord(**fields)  # type: ignore[arg-type]


class TraceRecordTests(unittest.TestCase):
    def test_latency_is_completion_minus_arrival(self) -> None:
        late = record(arrival_ms=10.0, route_ms=10.0, exec_start_ms=10.0)

        self.assertAlmostEqual(request_latency(late), 66.93)

    def test_incomplete_request_has_no_latency(self) -> None:
        with self.assertRaises(NotFinishedError):
            request_latency(record(completion_ms=None))

    def test_phase_order_is_enforced(self) -> None:
        with self.assertRaises(InvalidInputError):
            record(arrival_ms=5.0)
        with self.assertRaises(InvalidInputError):
            record(completion_ms=-1.0)
        with self.assertRaises(InvalidInputError):
            record(resize_applied_ms=-1.0)

    def test_breakdown_separates_launch_and_queue_time(self) -> None:
        cold = record(
            policy="cold",
            arrival_ms=0.0,
            route_ms=2.0,
            exec_start_ms=1505.37,
            completion_ms=1525.92,
            cold_start=True,
            resize_dispatch_ms=None,
            resize_applied_ms=None,
        )

        breakdown = latency_breakdown(cold, 15.24)

        self.assertEqual(breakdown.queue_wait_ms, 2.0)
        self.assertAlmostEqual(breakdown.cold_start_ms, 1503.37)
        self.assertAlmostEqual(breakdown.execution_ms, 5.31)
        self.assertAlmostEqual(breakdown.total_ms, request_latency(cold))


class TraceCsvTests(unittest.TestCase):
    def test_csv_uses_the_fixed_columns_and_empty_optionals(self) -> None:
        text = dump_trace([record(resize_dispatch_ms=None, resize_applied_ms=None)])
        header, row = text.splitlines()

        self.assertEqual(header, ",".join(TRACE_HEADER))
        self.assertEqual(
            row, "r000001,helloworld,inplace,0.0,0.0,,,0.0,76.93,i0001,false"
        )

    def test_provenance_line_is_skipped_when_reading(self) -> None:
        records = [record(), record(request_id="r000002", cold_start=True)]
        text = dump_trace(records, {"seed": 7, "policy": "inplace"})

        self.assertTrue(text.startswith("# seed=7 policy=inplace\n"))
        self.assertEqual(parse_trace(text), records)

    def test_trace_reads_from_a_file(self) -> None:
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / "trace.csv"
            path.write_text(dump_trace([record()]), encoding="utf-8")

            self.assertEqual(read_trace(path), [record()])

    def test_malformed_traces_are_rejected(self) -> None:
        with self.assertRaises(InvalidInputError):
            parse_trace("request_id,workload\nr1,x\n")
        broken = dump_trace([record()]).replace("76.93", "soon")
        with self.assertRaisesRegex(InvalidInputError, "line 2"):
            parse_trace(broken)

    def test_provenance_line_format(self) -> None:
        line = provenance_line({"seed": 1, "rng": "numpy.PCG64"})

        self.assertEqual(line, "# seed=1 rng=numpy.PCG64")


if __name__ == "__main__":
    unittest.main()
