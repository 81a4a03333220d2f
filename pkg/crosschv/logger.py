import dataclasses
import json
import logging
import sys
from json import JSONEncoder
from pathlib import Path
from typing import Any, TextIO

import numpy as np

LOG_FORMAT = "%(asctime)s : %(levelname)s : %(name)s : %(message)s"


def configure_logging(verbosity: int = 0) -> None:
    level = logging.WARNING - 10 * verbosity
    level = min(max(level, logging.DEBUG), logging.CRITICAL)

    logging.basicConfig(format=LOG_FORMAT, level=level, stream=sys.stderr, force=True)


class CrossChvEncoder(JSONEncoder):
    def default(self, o: Any) -> Any:
        if dataclasses.is_dataclass(o) and not isinstance(o, type):
            return {f.name: getattr(o, f.name) for f in dataclasses.fields(o) if f.repr}

        if isinstance(o, np.generic):
            return o.item()

        if isinstance(o, np.ndarray):
            return o.tolist()

        if isinstance(o, Path):
            return str(o)

        if isinstance(o, (frozenset, set)):
            return sorted(o)

        return o.__dict__


class RunLogger:
    """Buffers notes during a subcommand and emits them as one compact JSON line."""

    def __init__(self, stream: TextIO | None = None, max_log_length: int = 3750) -> None:
        self.logs = ""
        self.max_log_length = max_log_length
        self.stream = stream

    def print(self, *objects: Any, sep: str = " ", end: str = "\n") -> None:
        self.logs += sep.join(map(str, objects)) + end

    def flush(self, command: str, config: Any, artifacts: dict[str, str], exit_code: int) -> str:
        base_length = len(self.to_json([command, config, artifacts, exit_code, ""]))

        # The note buffer is the only part that gets truncated, the rest must fit as-is
        max_item_length = max(self.max_log_length - base_length, 0)

        line = self.to_json([command, config, artifacts, exit_code, self.truncate(self.logs, max_item_length)])
        print(line, file=self.stream if self.stream is not None else sys.stderr)

        self.logs = ""
        return line

    def to_json(self, value: Any) -> str:
        return json.dumps(value, cls=CrossChvEncoder, separators=(",", ":"), ensure_ascii=False)

    def truncate(self, value: str, max_length: int) -> str:
        lo, hi = 0, min(len(value), max_length)
        out = ""

        while lo <= hi:
            mid = (lo + hi) // 2

            candidate = value[:mid]
            if len(candidate) < len(value):
                candidate += "..."

            encoded_candidate = json.dumps(candidate, ensure_ascii=False)

            if len(encoded_candidate) <= max_length:
                out = candidate
                lo = mid + 1
            else:
                hi = mid - 1

        return out
