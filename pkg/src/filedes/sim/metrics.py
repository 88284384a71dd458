"""Per-epoch metric series and the run summary.

Every column except ``epoch`` and ``height`` is a cumulative counter, so the
series is monotone by construction. Column order is fixed; see
``docs/metrics.md``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, fields
from typing import Dict, List


@dataclass
class EpochRow:
    epoch: int = 0
    height: int = 0
    puts: int = 0
    deals: int = 0
    challenges_issued: int = 0
    proofs_generated: int = 0
    proofs_verified: int = 0
    proofs_failed: int = 0
    penalties_timeout: int = 0
    penalties_invalid: int = 0
    aggregates: int = 0
    aggregate_members: int = 0
    retrievals_ok: int = 0
    retrievals_failed: int = 0
    attack_detections: int = 0
    bytes_stored_total: int = 0
    conservation_violations: int = 0


COLUMNS = tuple(f.name for f in fields(EpochRow))
_GAUGES = ("epoch", "height", "bytes_stored_total")


@dataclass
class MetricsReport:
    rows: List[EpochRow] = field(default_factory=list)
    summary: Dict[str, object] = field(default_factory=dict)

    @property
    def final(self) -> EpochRow:
        return self.rows[-1] if self.rows else EpochRow()

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in self.rows:
            writer.writerow([getattr(row, c) for c in COLUMNS])
        return buf.getvalue()

    def summary_json(self) -> str:
        return json.dumps(self.summary, sort_keys=True, indent=2)

    def write(self, csv_path=None, summary_path=None) -> None:
        if csv_path is not None:
            with open(csv_path, "w", newline="") as fh:
                fh.write(self.to_csv())
        if summary_path is not None:
            with open(summary_path, "w") as fh:
                fh.write(self.summary_json() + "\n")

    def check_monotone(self) -> List[str]:
        """Names of counters that ever decrease (should be empty)."""
        bad = []
        for col in COLUMNS:
            if col in _GAUGES:
                continue
            values = [getattr(r, col) for r in self.rows]
            if any(v < 0 for v in values) or any(b < a for a, b in zip(values, values[1:])):
                bad.append(col)
        return bad
