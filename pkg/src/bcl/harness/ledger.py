"""Append-only JSON Lines run ledger.

Every record carries a ``seq`` number, a ``kind`` and its payload. Timing
information (wall clock, durations) lives under ``"ts"`` only, so two
identical runs produce identical ledgers once that field is dropped.
"""
from __future__ import annotations

import json
import math
import os
import time
from pathlib import Path

TIMING_KEYS = ("wallclock",)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if hasattr(v, "item") and callable(v.item):
        return v.item()
    return v


class Ledger:
    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._seq = len(read_ledger(self.path)) if self.path.exists() else 0

    def append(self, kind, payload, timing=None):
        payload = dict(payload)
        ts = {"time": time.time()}
        for key in TIMING_KEYS:
            if key in payload:
                ts[key] = payload.pop(key)
        ts.update(timing or {})
        rec = {"seq": self._seq, "kind": kind, **_jsonable(payload), "ts": _jsonable(ts)}
        line = json.dumps(rec, sort_keys=True, allow_nan=False)
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(line + "\n")
            f.flush()
            os.fsync(f.fileno())
        self._seq += 1
        return rec


def read_ledger(path):
    """All complete records; a torn final line from a crash is ignored."""
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.endswith("\n"):
                break
            out.append(json.loads(line))
    return out


def canonical(records):
    """Records without their timing field, for reproducibility checks."""
    return [{k: v for k, v in r.items() if k != "ts"} for r in records]
