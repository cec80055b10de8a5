from __future__ import annotations

from pathlib import Path

from warmslice.backends.atomic import write_atomically
from warmslice.cpu import ONE_CPU, MilliCpu, require_millicpu
from warmslice.errors import InvalidInputError

DEFAULT_PERIOD_US = 100_000


class CpuMaxBackend:
    """cgroup v2 ``cpu.max`` files: ``"<quota_us> <period_us>"``.

    Works against a real cgroup directory as well as a scratch directory.
    """

    name = "cpu.max"
    filename = "cpu.max"

    def __init__(self, *, period_us: int = DEFAULT_PERIOD_US) -> None:
        if period_us < ONE_CPU:
            raise InvalidInputError("period_us must be at least 1000")
        self._period_us = period_us

    def limit_path(self, directory: Path) -> Path:
        return directory / self.filename

    def write(self, directory: Path, limit: MilliCpu) -> None:
        require_millicpu(limit, name="limit")
        quota_us = limit * self._period_us // ONE_CPU
        write_atomically(self.limit_path(directory), f"{quota_us} {self._period_us}\n")

    def read(self, directory: Path) -> MilliCpu:
        raw = self.limit_path(directory).read_text(encoding="ascii")
        if raw.startswith("max"):
            raise InvalidInputError("cpu.max holds no limit")
        try:
            quota_raw, period_raw = raw.split()
            return round(int(quota_raw) * ONE_CPU / int(period_raw))
        except ValueError as error:
            raise InvalidInputError(f"unparseable cpu.max content: {raw!r}") from error
