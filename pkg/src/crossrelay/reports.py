"""Machine-readable scenario reports.

A run emits a line-delimited record file (one JSON object per workload
transaction plus one summary record) and a standalone summary document.
Records are versioned and written with sorted keys and no wall-clock
timestamps, so two runs of the same seeded scenario are byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

REPORT_VERSION = 1

TERMINAL_OUTCOMES = ("completed", "denied", "expired", "rejected")


@dataclass
class TxTimeline:
    """Millisecond timestamps for every pipeline stage one transaction hit."""

    workload_index: int
    tx_hash: Optional[str] = None  # hex
    emitted_ms: Optional[int] = None
    packed_ms: Optional[int] = None
    submitted_ms: Optional[int] = None
    included_ms: Optional[int] = None
    included_height: Optional[int] = None
    forwarded_ms: Optional[int] = None
    executed_ms: Optional[int] = None
    response_ms: Optional[int] = None
    callback_ms: Optional[int] = None
    verdict: Optional[str] = None
    reason: Optional[str] = None
    outcome: str = "pending"

    @property
    def latency_ms(self) -> Optional[int]:
        """End-to-end latency: emission to callback (or to execution for
        fire-and-forget workloads)."""
        if self.emitted_ms is None:
            return None
        end = self.callback_ms if self.callback_ms is not None else self.executed_ms
        if end is None:
            return None
        return end - self.emitted_ms


@dataclass
class ScenarioReport:
    scenario: str
    seed: int
    duration_ms: int
    timelines: list[TxTimeline] = field(default_factory=list)
    block_batch_sizes: list[int] = field(default_factory=list)
    session_states: dict[str, str] = field(default_factory=dict)

    def outcome_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for timeline in self.timelines:
            counts[timeline.outcome] = counts.get(timeline.outcome, 0) + 1
        return counts

    def latencies(self) -> list[int]:
        return [t.latency_ms for t in self.timelines if t.latency_ms is not None]

    def latency_percentiles(self) -> dict[str, int]:
        values = sorted(self.latencies())
        if not values:
            return {}

        def pct(p: float) -> int:
            idx = min(len(values) - 1, int(p * (len(values) - 1) + 0.5))
            return values[idx]

        return {"p50": pct(0.50), "p90": pct(0.90), "p99": pct(0.99), "max": values[-1]}

    @property
    def all_completed(self) -> bool:
        return bool(self.timelines) and all(t.outcome == "completed" for t in self.timelines)

    def summary(self) -> dict:
        return {
            "record": "summary",
            "report_version": REPORT_VERSION,
            "scenario": self.scenario,
            "seed": self.seed,
            "duration_ms": self.duration_ms,
            "workload_size": len(self.timelines),
            "outcomes": self.outcome_counts(),
            "latency_ms": self.latency_percentiles(),
            "block_batch_sizes": self.block_batch_sizes,
            "sessions": self.session_states,
        }

    def records(self) -> list[dict]:
        out = []
        for timeline in self.timelines:
            record = {"record": "tx", "report_version": REPORT_VERSION}
            record.update(asdict(timeline))
            record["latency_ms"] = timeline.latency_ms
            out.append(record)
        out.append(self.summary())
        return out

    def write(self, out_dir: Path) -> tuple[Path, Path]:
        """Write records.jsonl and summary.json; returns both paths."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        records_path = out_dir / "records.jsonl"
        with open(records_path, "w", encoding="utf-8") as fh:
            for record in self.records():
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        summary_path = out_dir / "summary.json"
        summary_path.write_text(json.dumps(self.summary(), sort_keys=True, indent=2) + "\n")
        return records_path, summary_path


# JSON schema (draft 2020-12) for report records; tests validate against it.
TX_RECORD_SCHEMA = {
    "type": "object",
    "required": ["record", "report_version", "workload_index", "outcome"],
    "properties": {
        "record": {"const": "tx"},
        "report_version": {"const": REPORT_VERSION},
        "workload_index": {"type": "integer", "minimum": 0},
        "tx_hash": {"type": ["string", "null"], "pattern": "^[0-9a-f]*$"},
        "emitted_ms": {"type": ["integer", "null"]},
        "packed_ms": {"type": ["integer", "null"]},
        "submitted_ms": {"type": ["integer", "null"]},
        "included_ms": {"type": ["integer", "null"]},
        "included_height": {"type": ["integer", "null"]},
        "forwarded_ms": {"type": ["integer", "null"]},
        "executed_ms": {"type": ["integer", "null"]},
        "response_ms": {"type": ["integer", "null"]},
        "callback_ms": {"type": ["integer", "null"]},
        "verdict": {"type": ["string", "null"]},
        "reason": {"type": ["string", "null"]},
        "latency_ms": {"type": ["integer", "null"]},
        "outcome": {"enum": list(TERMINAL_OUTCOMES) + ["pending"]},
    },
}

SUMMARY_SCHEMA = {
    "type": "object",
    "required": [
        "record",
        "report_version",
        "scenario",
        "seed",
        "workload_size",
        "outcomes",
        "latency_ms",
        "block_batch_sizes",
        "sessions",
    ],
    "properties": {
        "record": {"const": "summary"},
        "report_version": {"const": REPORT_VERSION},
        "scenario": {"type": "string"},
        "seed": {"type": "integer"},
        "duration_ms": {"type": "integer"},
        "workload_size": {"type": "integer"},
        "outcomes": {"type": "object", "additionalProperties": {"type": "integer"}},
        "latency_ms": {"type": "object", "additionalProperties": {"type": "integer"}},
        "block_batch_sizes": {"type": "array", "items": {"type": "integer"}},
        "sessions": {"type": "object", "additionalProperties": {"type": "string"}},
    },
}
