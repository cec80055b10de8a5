from __future__ import annotations

import itertools
import math
import statistics
import tempfile
import time
import unittest
from collections import defaultdict
from pathlib import Path

from tests.conftest import captured_logs
from warmslice.backends.cpu_max import CpuMaxBackend
from warmslice.backends.file import FileLimitBackend
from warmslice.cpu import MilliCpu
from warmslice.errors import (
    AlreadyExistsError,
    InvalidInputError,
    NotFoundError,
    WatchTimeoutError,
)
from warmslice.orchestrator import (
    MEASUREMENT_HEADER,
    FixedLatency,
    Measurement,
    MockOrchestrator,
    SampledLatency,
    dump_measurements,
    parse_measurements,
)
from warmslice.resize_model import (
    IDLE_UP_MEAN_MS,
    IDLE_UP_STD_MS,
    Direction,
    LoadState,
    bucket_floor,
    default_table,
)
from warmslice.rng import seeded_generator
from warmslice.workloads import Pattern, fine_plan, resize_plan, table2_suite

SLACK_MS = 20.0


class SlowReadBackend(FileLimitBackend):
    def read(self, directory: Path) -> MilliCpu:
        time.sleep(0.01)
        return super().read(directory)


class ContainerTests(unittest.TestCase):
    def setUp(self) -> None:
        self._directory = tempfile.TemporaryDirectory()
        self.workdir = Path(self._directory.name)
        self.orchestrator = MockOrchestrator(self.workdir)

    def tearDown(self) -> None:
        self.orchestrator.close()
        self._directory.cleanup()

    def test_new_containers_hold_their_initial_limit(self) -> None:
        low = self.orchestrator.create_container("low", 1)
        high = self.orchestrator.create_container("high", 6000)

        self.assertEqual(low.limit_file.read_text(encoding="ascii").strip(), "1")
        self.assertEqual(high.limit_file.read_text(encoding="ascii").strip(), "6000")
        self.assertEqual(self.orchestrator.read_limit(high), 6000)
        self.assertEqual(low.directory, self.workdir / "low")

    def test_duplicate_container_is_rejected(self) -> None:
        self.orchestrator.create_container("c1", 1)

        with self.assertRaises(AlreadyExistsError):
            self.orchestrator.create_container("c1", 1)

    def test_unknown_container_is_not_found(self) -> None:
        with self.assertRaises(NotFoundError):
            self.orchestrator.container("ghost")

    def test_patch_lands_after_the_injected_latency(self) -> None:
        handle = self.orchestrator.create_container("c1", 1)

        patch = self.orchestrator.patch_cpu_limit(handle, 100, 50.0)

        self.assertEqual(self.orchestrator.read_limit(handle), 1)
        seen = self.orchestrator.watch(handle, 100, poll_interval_us=1000)
        self.assertGreaterEqual(seen.detect_ns - patch.dispatch_ns, 50_000_000)
        self.assertEqual(seen.observed_value, 100)
        self.assertEqual(handle.current_limit, 100)

    def test_zero_latency_patch_applies_before_returning(self) -> None:
        handle = self.orchestrator.create_container("c1", 1)

        self.orchestrator.patch_cpu_limit(handle, 100, 0.0)

        self.assertEqual(self.orchestrator.read_limit(handle), 100)

    def test_measurement_is_sandwiched_by_the_poll_interval(self) -> None:
        handle = self.orchestrator.create_container("c1", 1)

        measured = self.orchestrator.measure_resize(handle, 100, 10.0, 1000)

        self.assertGreaterEqual(measured, 10.0)
        self.assertLessEqual(measured, 10.0 + 1.0 + SLACK_MS)

    def test_resizing_to_the_current_value_is_rejected(self) -> None:
        handle = self.orchestrator.create_container("c1", 500)

        with self.assertRaises(InvalidInputError):
            self.orchestrator.measure_resize(handle, 500, 0.0)

    def test_overlapping_patches_land_in_dispatch_order(self) -> None:
        handle = self.orchestrator.create_container("c1", 1)

        first = self.orchestrator.patch_cpu_limit(handle, 100, 200.0)
        self.orchestrator.patch_cpu_limit(handle, 200, 10.0)
        time.sleep(0.05)
        held = self.orchestrator.read_limit(handle)
        seen = self.orchestrator.watch(handle, 200, poll_interval_us=1000)

        self.assertEqual(held, 1)
        self.assertGreaterEqual((seen.detect_ns - first.dispatch_ns) / 1e6, 200.0)
        time.sleep(0.02)
        self.assertEqual(self.orchestrator.read_limit(handle), 200)
        self.assertEqual(handle.current_limit, 200)

    def test_inline_patch_waits_for_an_earlier_one(self) -> None:
        handle = self.orchestrator.create_container("c1", 1)

        self.orchestrator.patch_cpu_limit(handle, 100, 30.0)
        started = time.perf_counter()
        self.orchestrator.patch_cpu_limit(handle, 200, 0.0)
        waited_ms = (time.perf_counter() - started) * 1000

        self.assertGreaterEqual(waited_ms, 20.0)
        self.assertEqual(self.orchestrator.read_limit(handle), 200)

    def test_negative_latency_is_rejected(self) -> None:
        handle = self.orchestrator.create_container("c1", 1)

        with self.assertRaises(InvalidInputError):
            self.orchestrator.patch_cpu_limit(handle, 100, -1.0)
        with self.assertRaises(InvalidInputError):
            FixedLatency(-1.0)

    def test_cpu_max_backend_is_interchangeable(self) -> None:
        workdir = self.workdir / "cgroup"
        with MockOrchestrator(workdir, backend=CpuMaxBackend()) as orchestrator:
            handle = orchestrator.create_container("c1", 1000)
            measured = orchestrator.measure_resize(handle, 1, 0.0, 1000)

            self.assertEqual(handle.limit_file.name, "cpu.max")
            written = handle.limit_file.read_text(encoding="ascii")
            self.assertEqual(written, "100 100000\n")
        self.assertGreaterEqual(measured, 0.0)


class RunPlanTests(unittest.TestCase):
    def test_every_table2_measurement_is_sandwiched(self) -> None:
        measurements: list[Measurement] = []
        with (
            tempfile.TemporaryDirectory() as directory,
            MockOrchestrator(Path(directory)) as orchestrator,
        ):
            for injected in (0.0, 10.0, 50.0, 200.0):
                for plan in table2_suite():
                    measurements += orchestrator.run_plan(
                        plan, FixedLatency(injected), poll_interval_us=1000
                    )

        timed = sum(len(plan.timed_steps) for plan in table2_suite())
        self.assertEqual(len(measurements), 4 * timed)
        for item in measurements:
            with self.subTest(plan=item.plan_id, step=item.step_index):
                self.assertGreaterEqual(item.measured_ms, item.injected_ms)
                upper = item.injected_ms + 1.0 + SLACK_MS
                self.assertLessEqual(item.measured_ms, upper)

    def test_a_plan_can_run_twice_on_one_orchestrator(self) -> None:
        plan = resize_plan(100, Pattern.INCREMENTAL, Direction.UP, 1, 300)
        with (
            tempfile.TemporaryDirectory() as directory,
            MockOrchestrator(Path(directory)) as orchestrator,
        ):
            first = orchestrator.run_plan(plan, FixedLatency(0.0))
            second = orchestrator.run_plan(plan, FixedLatency(5.0))

            ids = sorted(entry.name for entry in Path(directory).iterdir())

        self.assertEqual(len(first), len(second))
        self.assertEqual(ids, [f"{plan.plan_id}-run0-r0", f"{plan.plan_id}-run1-r0"])

    def test_sampled_upward_latencies_match_the_calibration(self) -> None:
        upward = [plan for plan in table2_suite() if plan.direction is Direction.UP]
        source = SampledLatency(default_table(), LoadState.IDLE, seeded_generator(8))
        measurements: list[Measurement] = []
        with (
            tempfile.TemporaryDirectory() as directory,
            MockOrchestrator(Path(directory)) as orchestrator,
        ):
            for plan in upward:
                measurements += orchestrator.run_plan(plan, source)

        by_plan: defaultdict[str, list[Measurement]] = defaultdict(list)
        for item in measurements:
            by_plan[item.plan_id].append(item)
        self.assertEqual(len(by_plan), 4)
        for plan_id, items in by_plan.items():
            injected = statistics.fmean(item.injected_ms for item in items)
            measured = statistics.fmean(item.measured_ms for item in items)
            sem = IDLE_UP_STD_MS / math.sqrt(len(items))
            with self.subTest(plan=plan_id):
                self.assertLess(abs(injected - IDLE_UP_MEAN_MS), 3 * sem)
                self.assertGreaterEqual(measured, injected)
                self.assertLessEqual(measured, injected + 1.0 + SLACK_MS)

    def test_cumulative_resets_are_applied_but_not_measured(self) -> None:
        plan = resize_plan(100, Pattern.CUMULATIVE, Direction.UP, 1, 1000)
        with (
            tempfile.TemporaryDirectory() as directory,
            MockOrchestrator(Path(directory)) as orchestrator,
        ):
            measurements = orchestrator.run_plan(
                plan, FixedLatency(0.0), repetitions=2
            )

            last = orchestrator.container(f"{plan.plan_id}-run0-r1")
            self.assertEqual(orchestrator.read_limit(last), 1000)

        self.assertEqual(len(measurements), 20)
        self.assertEqual({item.from_cpu for item in measurements}, {1})
        self.assertEqual({item.repetition for item in measurements}, {0, 1})
        self.assertEqual(
            [item.step_index for item in measurements[:3]],
            [step.index for step in plan.timed_steps[:3]],
        )

    def test_sampled_latency_drives_the_injected_values(self) -> None:
        plan = resize_plan(100, Pattern.INCREMENTAL, Direction.UP, 1, 300)
        source = SampledLatency(default_table(), LoadState.IDLE, seeded_generator(3))
        with (
            tempfile.TemporaryDirectory() as directory,
            MockOrchestrator(Path(directory)) as orchestrator,
        ):
            measurements = orchestrator.run_plan(plan, source)

        self.assertEqual(len(measurements), 3)
        for item in measurements:
            self.assertGreater(item.injected_ms, 0.0)
            self.assertGreaterEqual(item.measured_ms, item.injected_ms)

    def test_timeout_names_the_step(self) -> None:
        plan = resize_plan(100, Pattern.INCREMENTAL, Direction.DOWN, 1000, 1)
        with (
            tempfile.TemporaryDirectory() as directory,
            MockOrchestrator(
                Path(directory), watch_timeout_seconds=0.05
            ) as orchestrator,
            self.assertRaises(WatchTimeoutError) as caught,
        ):
            orchestrator.run_plan(plan, FixedLatency(10_000.0))

        self.assertEqual(caught.exception.step_index, 0)
        self.assertIn("step 0", str(caught.exception))

    def test_invalid_repetitions_are_rejected(self) -> None:
        plan = resize_plan(100, Pattern.INCREMENTAL, Direction.UP, 1, 300)
        with (
            tempfile.TemporaryDirectory() as directory,
            MockOrchestrator(Path(directory)) as orchestrator,
            self.assertRaises(InvalidInputError),
        ):
            orchestrator.run_plan(plan, FixedLatency(0.0), repetitions=0)


class FinePlanLatencyTests(unittest.TestCase):
    def test_downward_means_shrink_as_the_target_grows(self) -> None:
        _, downward = fine_plan()
        source = SampledLatency(default_table(), LoadState.IDLE, seeded_generator(4))
        by_target: defaultdict[int, list[float]] = defaultdict(list)
        for _ in range(50):
            for step in downward.timed_steps:
                latency = source.next_latency(step.from_cpu, step.to_cpu)
                by_target[bucket_floor(step.to_cpu)].append(latency)

        targets = sorted(by_target)
        means = [statistics.fmean(by_target[target]) for target in targets]

        self.assertEqual(targets[0], 1)
        self.assertEqual(targets[-1], 900)
        for lower, higher in itertools.pairwise(means):
            self.assertGreater(lower, higher)


class SlackWarningTests(unittest.TestCase):
    def test_overrun_beyond_poll_and_slack_is_logged(self) -> None:
        with (
            tempfile.TemporaryDirectory() as directory,
            MockOrchestrator(
                Path(directory), backend=SlowReadBackend(), slack_ms=0.0
            ) as orchestrator,
        ):
            handle = orchestrator.create_container("c1", 1)
            with captured_logs("warmslice.orchestrator") as stream:
                orchestrator.measure_resize(handle, 100, 0.0, poll_interval_us=1)

        self.assertIn("Resize of c1 to 100m", stream.getvalue())


class MeasurementCsvTests(unittest.TestCase):
    def test_measurements_round_trip_with_provenance(self) -> None:
        items = [
            Measurement("100m-incremental-up-1m-1000m", 0, 1, 100, 0, 10.0, 10.84),
            Measurement("100m-incremental-up-1m-1000m", 1, 100, 200, 0, 10.0, 11.02),
        ]

        text = dump_measurements(items, {"poll_us": 1000, "slack_ms": 20.0})

        self.assertTrue(text.startswith("# poll_us=1000 slack_ms=20.0\n"))
        self.assertEqual(parse_measurements(text), items)

    def test_malformed_measurements_are_rejected(self) -> None:
        with self.assertRaises(InvalidInputError):
            parse_measurements("plan,step\n")
        header = ",".join(MEASUREMENT_HEADER)
        with self.assertRaises(InvalidInputError):
            parse_measurements(f"{header}\np,zero,1,100,0,1.0,1.0\n")


if __name__ == "__main__":
    unittest.main()
