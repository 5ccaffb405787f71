"""Telemetry sinks: one JSON record per evaluation, one summary per iteration.

Records carry no wall-clock timestamps so that a replayed or resumed search
produces byte-identical streams.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Callable

CSV_COLUMNS = ["iteration", "best_loss", "mean_loss", "archive_size", "evals_total"]


class Telemetry:
    """Collects evaluation and iteration records, optionally mirroring them to files.

    ``jsonl_path'' receives every record as one JSON line; ``csv_path``
    receives one row per iteration. ``echo`` (if set) is called with each
    iteration record, e.g. to print progress.
    """

    def __init__(
        self,
        jsonl_path: str | Path | None = None,
        csv_path: str | Path | None = None,
        echo: Callable[[dict], None] | None = None,
        keep_records: bool = True,
        append: bool = False,
    ):
        self.eval_records: list[dict] = []
        self.iteration_records: list[dict] = []
        self.keep_records = keep_records
        self.echo = echo
        mode = "a" if append else "w"
        self._jsonl = open(jsonl_path, mode, encoding="utf-8") if jsonl_path else None
        self._csv_file = open(csv_path, mode, newline="", encoding="utf-8") if csv_path else None
        self._csv = None
        if self._csv_file is not None:
            self._csv = csv.writer(self._csv_file, lineterminator="\n")
            if not append or self._csv_file.tell() == 0:
                self._csv.writerow(CSV_COLUMNS)

    def eval_event(self, **fields):
        record = {"type": "eval", **fields}
        if self.keep_records:
            self.eval_records.append(record)
        self._write_jsonl(record)

    def iteration_event(self, **fields):
        record = {"type": "iteration", **fields}
        if self.keep_records:
            self.iteration_records.append(record)
        self._write_jsonl(record)
        if self._csv is not None:
            self._csv.writerow([record.get(column) for column in CSV_COLUMNS])
            self._csv_file.flush()
        if self.echo is not None:
            self.echo(record)

    def _write_jsonl(self, record: dict):
        if self._jsonl is not None:
            self._jsonl.write(json.dumps(record, sort_keys=True) + "\n")
            self._jsonl.flush()

    def close(self):
        if self._jsonl is not None:
            self._jsonl.close()
            self._jsonl = None
        if self._csv_file is not None:
            self._csv_file.close()
            self._csv_file = None
            self._csv = None

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()
