# run_log.py
from __future__ import annotations

import os
import sys
import time
from datetime import datetime
from pathlib import Path
from typing import Optional, TextIO


# -------------------------
# log path helper
# -------------------------
def make_log_path(logdir: str, prefix: str) -> Path:
    ld = Path(logdir).resolve()
    ld.mkdir(parents=True, exist_ok=True)
    ts = datetime.now().strftime("%Y%m%d_%H%M%S")
    rnd = f"{int(time.time()*1000)}_{os.getpid()}"
    return ld / f"{prefix}_{ts}_{rnd}.log"


class TeeLogger:
    """
    "[TAG] message" lines to stderr and, optionally, appended to a log file.
    stdout is left alone so the result table stays machine-readable.
    """

    def __init__(self, log_path: Optional[Path] = None, stream: Optional[TextIO] = None, quiet: bool = False):
        self.log_path = Path(log_path) if log_path else None
        self.stream = stream
        self.quiet = quiet
        self.f = None
        if self.log_path is not None:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            self.f = self.log_path.open("a", encoding="utf-8", errors="replace")

    def __enter__(self) -> "TeeLogger":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self):
        try:
            if self.f is not None:
                self.f.close()
        except Exception:
            pass
        self.f = None

    def write_line(self, s: str):
        if not s.endswith("\n"):
            s += "\n"
        if not self.quiet:
            out = self.stream if self.stream is not None else sys.stderr
            out.write(s)
            out.flush()
        if self.f is not None:
            self.f.write(s)
            self.f.flush()

    def log(self, tag: str, msg: str):
        self.write_line(f"[{tag}] {msg}")

    def info(self, msg: str):
        self.log("INFO", msg)

    def warn(self, msg: str):
        self.log("WARN", msg)

    def error(self, msg: str):
        self.log("ERROR", msg)
