"""Append-only loss log shared by the trainers"""

import time
from pathlib import Path

COLUMNS = ("timestamp_ns", "epoch", "step", "loss")


class LossLog:
    """
    Tab-separated log with strictly increasing nanosecond timestamps.

    Appends to an existing file so a resumed run continues the same log.
    """

    def __init__(self, path: Path | None) -> None:
        self.path = path
        self._last_timestamp = 0
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        if not path.exists() or path.stat().st_size == 0:
            path.write_text("\t".join(COLUMNS) + "\n", encoding="utf-8")
        else:
            last = path.read_text(encoding="utf-8").rstrip("\n").rsplit("\n", 1)[-1]
            if last and last.split("\t")[0].isdigit():
                self._last_timestamp = int(last.split("\t")[0])

    def append(self, epoch: int, step: int, loss: float) -> None:
        if self.path is None:
            return
        timestamp = max(time.time_ns(), self._last_timestamp + 1)
        self._last_timestamp = timestamp
        with open(self.path, "a", encoding="utf-8") as handle:
            handle.write(f"{timestamp}\t{epoch}\t{step}\t{loss:.10g}\n")
