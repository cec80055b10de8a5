from __future__ import annotations

import json
import math
import tempfile
import unittest
from pathlib import Path
from typing import Any

from warmslice.config import ConfigError
from warmslice.policies import PolicyKind
from warmslice.resize_model import (
    LoadState,
    ResizeLatencyTable,
    default_table,
    dump_calibration,
)
from warmslice.scenario import ScenarioError, load_scenario, parse_scenario
from warmslice.workloads import ClosedLoop, Explicit, Poisson


def document(**overrides: Any) -> dict[str, Any]:
    data: dict[str, Any] = {"workload": "helloworld", "policy": {"kind": "warm"}}
    data.update(overrides)
    return data


def write_scenario(directory: Path, **overrides: Any) -> Path:
    path = directory / "scenario.json"
    path.write_text(json.dumps(document(**overrides)), encoding="utf-8")
    return path


class ParseScenarioTests(unittest.TestCase):
    def test_minimal_document_fills_in_defaults(self) -> None:
        config = parse_scenario(document())

        self.assertEqual(config.policy.kind, PolicyKind.WARM)
        self.assertEqual(config.policy.stable_window_ms, 6000.0)
        self.assertEqual(config.node.capacity, 8000)
        self.assertEqual(config.driver.mode, ClosedLoop(vus=1, iterations=50))
        self.assertEqual(config.seed, 42)
        self.assertEqual(config.calibration, "default")
        self.assertAlmostEqual(config.policy.platform_overhead_ms, 2.87 * 5.31)

    def test_default_policy_carries_no_overheads(self) -> None:
        config = parse_scenario(document(policy={"kind": "default"}))

        self.assertEqual(config.policy.platform_overhead_ms, 0.0)
        self.assertEqual(config.policy.cold_start_ms, 0.0)

    def test_inline_workload_and_explicit_overheads(self) -> None:
        config = parse_scenario(
            document(
                workload={
                    "name": "resize-heavy",
                    "runtime_ms": 40,
                    "cpu_bound_fraction": 0.5,
                },
                policy={
                    "kind": "inplace",
                    "platform_overhead_ms": 3,
                    "up_load": "stress_cpu",
                },
                driver={"mode": "poisson", "rate_rps": 10, "horizon_ms": 1000},
            )
        )

        self.assertEqual(config.workload.fixed_ms, 20.0)
        self.assertEqual(config.policy.platform_overhead_ms, 3.0)
        self.assertEqual(config.policy.cold_start_ms, 0.0)
        self.assertEqual(config.policy.up_load, LoadState.STRESS_CPU)
        self.assertEqual(config.driver.mode, Poisson(rate_rps=10.0, horizon_ms=1000.0))

    def test_explicit_driver(self) -> None:
        driver = {"mode": "explicit", "arrivals_ms": [0, 10000]}

        config = parse_scenario(document(driver=driver))

        self.assertEqual(config.driver.mode, Explicit((0.0, 10000.0)))

    def test_minimum_stable_window_is_accepted(self) -> None:
        policy = {"kind": "cold", "stable_window_ms": 6000}

        config = parse_scenario(document(policy=policy))

        self.assertEqual(config.policy.stable_window_ms, 6000.0)

    def test_park_value_must_stay_below_the_active_value(self) -> None:
        policy = {"kind": "inplace", "park_cpu": 1000, "active_cpu": 1000}

        with self.assertRaisesRegex(ScenarioError, "park_cpu"):
            parse_scenario(document(policy=policy))

    def test_unknown_keys_are_reported_with_their_path(self) -> None:
        with self.assertRaisesRegex(ScenarioError, "unknown key: policy.warmup"):
            parse_scenario(document(policy={"kind": "warm", "warmup": 1}))
        with self.assertRaisesRegex(ScenarioError, "unknown key: nodes"):
            parse_scenario(document(nodes={}))
        with self.assertRaisesRegex(ScenarioError, "unknown key: driver.rate_rps"):
            parse_scenario(document(driver={"mode": "closed_loop", "rate_rps": 3}))

    def test_invalid_values_are_rejected(self) -> None:
        cases = [
            document(workload="nonexistent"),
            document(policy={"kind": "lukewarm"}),
            document(policy={}),
            document(policy={"kind": "warm", "min_scale": "one"}),
            document(driver={"mode": "poisson", "rate_rps": 10}),
            document(driver={"mode": "explicit", "arrivals_ms": [5, 1]}),
            document(node={"capacity_mcpu": 500}),
            document(policy={"kind": "warm", "active_cpu": 9000}),
            document(seed=-1),
            document(policy={"kind": "warm", "stable_window_ms": math.nan}),
            document(policy={"kind": "cold", "cold_start_ms": math.inf}),
            document(driver={"mode": "poisson", "rate_rps": math.inf, "horizon_ms": 1}),
            document(driver={"mode": "explicit", "arrivals_ms": [0, math.inf]}),
            {"policy": {"kind": "warm"}},
        ]
        for case in cases:
            with self.subTest(case=case), self.assertRaises(ScenarioError):
                parse_scenario(case)

    def test_scenario_errors_are_configuration_errors(self) -> None:
        self.assertTrue(issubclass(ScenarioError, ConfigError))


class LoadScenarioTests(unittest.TestCase):
    def test_calibration_path_resolves_next_to_the_scenario(self) -> None:
        with tempfile.TemporaryDirectory() as directory:
            root = Path(directory)
            calibration = dump_calibration(default_table())
            (root / "calibration.csv").write_text(calibration, encoding="utf-8")

            config = load_scenario(write_scenario(root, calibration="calibration.csv"))
            table = config.resize_table()

        self.assertEqual(config.calibration, root / "calibration.csv")
        self.assertIsInstance(table, ResizeLatencyTable)
        self.assertEqual(table, default_table())

    def test_missing_calibration_is_rejected(self) -> None:
        with tempfile.TemporaryDirectory() as directory:
            path = write_scenario(Path(directory), calibration="absent.csv")

            with self.assertRaisesRegex(ScenarioError, "calibration"):
                load_scenario(path)

    def test_non_finite_json_literals_are_rejected(self) -> None:
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / "scenario.json"
            path.write_text(
                '{"workload": "helloworld", "policy": {"kind": "cold", '
                '"platform_overhead_ms": NaN}}',
                encoding="utf-8",
            )

            with self.assertRaisesRegex(ScenarioError, "platform_overhead_ms"):
                load_scenario(path)

    def test_undecodable_scenario_is_rejected(self) -> None:
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / "scenario.json"
            path.write_bytes(b"\xff\xfe{}")

            with self.assertRaises(ScenarioError):
                load_scenario(path)

    def test_undecodable_calibration_is_rejected(self) -> None:
        with tempfile.TemporaryDirectory() as directory:
            root = Path(directory)
            (root / "calibration.csv").write_bytes(b"\xff\xfe\n")

            with self.assertRaisesRegex(ScenarioError, "UTF-8"):
                load_scenario(write_scenario(root, calibration="calibration.csv"))

    def test_invalid_json_is_rejected(self) -> None:
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / "scenario.json"
            path.write_text("{not json", encoding="utf-8")

            with self.assertRaises(ScenarioError):
                load_scenario(path)


if __name__ == "__main__":
    unittest.main()
