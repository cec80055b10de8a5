from __future__ import annotations

from pathlib import Path

from warmslice.backends.atomic import write_atomically
from warmslice.cpu import MilliCpu, require_millicpu
from warmslice.errors import InvalidInputError


class FileLimitBackend:
    """One line holding the limit as decimal milliCPU, e.g. ``"100\\n"``."""

    name = "file"
    filename = "cpu.limit"

    def limit_path(self, directory: Path) -> Path:
        return directory / self.filename

    def write(self, directory: Path, limit: MilliCpu) -> None:
        require_millicpu(limit, name="limit")
        write_atomically(self.limit_path(directory), f"{limit}\n")

    def read(self, directory: Path) -> MilliCpu:
        raw = self.limit_path(directory).read_text(encoding="ascii")
        try:
            return int(raw.strip())
        except ValueError as error:
            raise InvalidInputError(
                f"unparseable limit file content: {raw!r}"
            ) from error
