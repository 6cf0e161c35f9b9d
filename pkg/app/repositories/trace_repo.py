from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

import pandas as pd

from app.schemas.trace import RunSummary, TraceRow

TRACE_FILE = "trace.jsonl"
SUMMARY_FILE = "summary.json"


class TraceRepository:
    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)

    @property
    def trace_path(self) -> Path:
        return self.out_dir / TRACE_FILE

    @property
    def summary_path(self) -> Path:
        return self.out_dir / SUMMARY_FILE

    def write_trace(self, rows: Iterable[TraceRow]) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        with self.trace_path.open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(row.model_dump_json() + "\n")
        return self.trace_path

    def write_summary(self, summary: RunSummary) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.summary_path.write_text(summary.model_dump_json(indent=2), encoding="utf-8")
        return self.summary_path

    def read_trace(self) -> pd.DataFrame:
        return pd.read_json(self.trace_path, lines=True)

    def read_summary(self) -> RunSummary:
        return RunSummary.model_validate(json.loads(self.summary_path.read_text(encoding="utf-8")))
