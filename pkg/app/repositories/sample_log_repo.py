from __future__ import annotations

import json
from pathlib import Path

from app.services.montecarlo import SampleBatch

SAMPLE_LOG_FILE = "samples.jsonl"


class SampleLogRepository:
    """Append-only JSON-lines log, one record per sample: {block, x, G, forced}."""

    def __init__(self, out_dir: str | Path):
        self.path = Path(out_dir) / SAMPLE_LOG_FILE
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("", encoding="utf-8")

    def append(self, batch: SampleBatch) -> None:
        with self.path.open("a", encoding="utf-8") as fh:
            for sample in batch.records():
                fh.write(json.dumps(sample.to_record()) + "\n")

    def read(self) -> list[dict]:
        with self.path.open(encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]
