from __future__ import annotations

import logging
import unittest
from pathlib import Path

from warmslice.config import ConfigError, Settings


class SettingsTests(unittest.TestCase):
    def test_defaults(self) -> None:
        settings = Settings.from_env({})

        self.assertEqual(settings.out_dir, Path("out"))
        self.assertEqual(settings.log_level, logging.INFO)
        self.assertEqual(settings.poll_interval_us, 1000)
        self.assertEqual(settings.watch_timeout_seconds, 30.0)
        self.assertEqual(settings.repetitions, 5)

    def test_reads_overrides(self) -> None:
        settings = Settings.from_env(
            {
                "WARMSLICE_OUT": "results",
                "WARMSLICE_LOG_LEVEL": "debug",
                "WARMSLICE_POLL_US": "250",
                "WARMSLICE_WATCH_TIMEOUT_SECONDS": "2.5",
                "WARMSLICE_REPETITIONS": "20",
            }
        )

        self.assertEqual(settings.out_dir, Path("results"))
        self.assertEqual(settings.log_level, logging.DEBUG)
        self.assertEqual(settings.poll_interval_us, 250)
        self.assertEqual(settings.watch_timeout_seconds, 2.5)
        self.assertEqual(settings.repetitions, 20)

    def test_rejects_unknown_log_level(self) -> None:
        with self.assertRaisesRegex(ConfigError, "WARMSLICE_LOG_LEVEL"):
            Settings.from_env({"WARMSLICE_LOG_LEVEL": "LOUD"})

    def test_rejects_non_positive_poll_interval(self) -> None:
        with self.assertRaisesRegex(ConfigError, "WARMSLICE_POLL_US"):
            Settings.from_env({"WARMSLICE_POLL_US": "0"})
        with self.assertRaisesRegex(ConfigError, "WARMSLICE_POLL_US"):
            Settings.from_env({"WARMSLICE_POLL_US": "fast"})

    def test_rejects_empty_output_directory(self) -> None:
        with self.assertRaisesRegex(ConfigError, "WARMSLICE_OUT"):
            Settings.from_env({"WARMSLICE_OUT": "  "})

    def test_rejects_bad_timeout(self) -> None:
        with self.assertRaisesRegex(ConfigError, "WARMSLICE_WATCH_TIMEOUT_SECONDS"):
            Settings.from_env({"WARMSLICE_WATCH_TIMEOUT_SECONDS": "-1"})
        for raw in ("inf", "nan", "soon"):
            with (
                self.subTest(raw=raw),
                self.assertRaisesRegex(ConfigError, "WARMSLICE_WATCH_TIMEOUT_SECONDS"),
            ):
                Settings.from_env({"WARMSLICE_WATCH_TIMEOUT_SECONDS": raw})

    def test_errors_quote_the_offending_value(self) -> None:
        with self.assertRaisesRegex(
            ConfigError, "WARMSLICE_REPETITIONS=.many. is not an integer"
        ):
            Settings.from_env({"WARMSLICE_REPETITIONS": "many"})
        with self.assertRaisesRegex(ConfigError, "at least 1, got 0"):
            Settings.from_env({"WARMSLICE_REPETITIONS": "0"})

    def test_blank_values_keep_the_defaults(self) -> None:
        settings = Settings.from_env(
            {"WARMSLICE_POLL_US": " ", "WARMSLICE_LOG_LEVEL": "critical"}
        )

        self.assertEqual(settings.poll_interval_us, 1000)
        self.assertEqual(settings.log_level, logging.CRITICAL)


if __name__ == "__main__":
    unittest.main()
