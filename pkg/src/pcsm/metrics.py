"""Per-run metrics and cross-seed aggregation.

Turns the raw event records of one simulation run into the numbers the
evaluation cares about: delivery ratio, collateral drop rates, attack
suppression and identification latency, false blocks, and node power.
A suppression latency is only reported when the run ends with the
attacker fully gated; a stack that merely degrades under attack gets
None, which aggregation folds into a detection rate.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, fields
from typing import Iterable

from .reassembly import GATE_REASONS
from .simulator import FrameRecord, RunResult

# Terminal per-fragment dispositions a finished run may contain.
GATE_DISPOSITIONS = frozenset(r.value for r in GATE_REASONS)
DROP_DISPOSITIONS = GATE_DISPOSITIONS | {
    "duplicate",
    "buffer_full",
    "no_session",
    "timeout",
}
FINAL_DISPOSITIONS = DROP_DISPOSITIONS | {"delivered", "buffered"}


def compute_pdr(sent: int, delivered: int) -> float:
    """Packet delivery ratio in percent. An idle network delivers everything."""
    if sent == 0:
        return 100.0
    return 100.0 * delivered / sent


def detection_latency(
    records: Iterable[FrameRecord], attacker: int, attack_start: float
) -> float | None:
    """Time from first hostile arrival until the last non-gated one.

    Scans attacker-origin arrivals from the attack onset onward and
    finds the earliest point after which every arrival was rejected by
    a security gate.  Returns the gap between the first arrival and
    that point, 0.0 when nothing ever got through, and None when the
    run ended with hostile traffic still being admitted (or when the
    attacker never transmitted).
    """
    arrivals = sorted(
        (r for r in records if r.origin == attacker and r.time >= attack_start),
        key=lambda r: r.time,
    )
    if not arrivals:
        return None
    suffix_start = len(arrivals)
    for i in range(len(arrivals) - 1, -1, -1):
        if arrivals[i].disposition not in GATE_DISPOSITIONS:
            break
        suffix_start = i
    if suffix_start == len(arrivals):
        return None
    return arrivals[suffix_start].time - arrivals[0].time


@dataclass
class RunMetrics:
    """Flat summary of one simulation run."""

    name: str
    stack: str
    seed: int
    attack_kind: str | None
    duration: float
    sent_datagrams: int
    delivered_datagrams: int
    pdr: float
    received_fragments: int
    legit_fragments: int
    legit_drops: int
    legit_drop_rate: float
    legit_drops_by_reason: dict[str, int]
    attacker_fragments: int
    attacker_drops: int
    attacker_drops_by_reason: dict[str, int]
    attacker_delivered_datagrams: int
    detection_latency_s: float | None
    identification_latency_s: float | None
    false_blocks: int
    false_block_rate: float
    avg_power_mw: float
    root_power_mw: float
    attacker_power_mw: float | None
    mean_availability: float
    max_occupancy: int
    conservation_ok: bool

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def collect(result: RunResult) -> RunMetrics:
    """Reduce one run's records to a RunMetrics."""
    attacker = result.attacker
    legit = [r for r in result.records if r.origin != attacker]
    hostile = [r for r in result.records if attacker is not None and r.origin == attacker]

    legit_drops: dict[str, int] = {}
    for rec in legit:
        if rec.disposition in DROP_DISPOSITIONS:
            legit_drops[rec.disposition] = legit_drops.get(rec.disposition, 0) + 1
    hostile_drops: dict[str, int] = {}
    for rec in hostile:
        if rec.disposition in DROP_DISPOSITIONS:
            hostile_drops[rec.disposition] = hostile_drops.get(rec.disposition, 0) + 1

    sent = sum(result.sent_datagrams.values())
    delivered = sum(
        1 for d in result.delivered if d.origin != attacker and d.intact
    )
    attacker_delivered = sum(1 for d in result.delivered if d.origin == attacker)

    n_legit_drops = sum(legit_drops.values())
    n_hostile_drops = sum(hostile_drops.values())

    if attacker is not None and result.attack_start is not None:
        det = detection_latency(result.records, attacker, result.attack_start)
        ident = (
            result.identified_at - result.attack_start
            if result.identified_at is not None
            else None
        )
    else:
        det = None
        ident = None

    false_blocks = sum(
        count for node, count in result.block_events.items() if node != attacker
    )

    non_attacker_power = [
        p for node, p in result.node_power_mw.items() if node != attacker
    ]

    stray = sum(1 for r in result.records if r.disposition not in FINAL_DISPOSITIONS)

    return RunMetrics(
        name=result.name,
        stack=result.stack,
        seed=result.seed,
        attack_kind=result.attack_kind,
        duration=result.duration,
        sent_datagrams=sent,
        delivered_datagrams=delivered,
        pdr=compute_pdr(sent, delivered),
        received_fragments=len(result.records),
        legit_fragments=len(legit),
        legit_drops=n_legit_drops,
        legit_drop_rate=100.0 * n_legit_drops / len(legit) if legit else 0.0,
        legit_drops_by_reason=dict(sorted(legit_drops.items())),
        attacker_fragments=len(hostile),
        attacker_drops=n_hostile_drops,
        attacker_drops_by_reason=dict(sorted(hostile_drops.items())),
        attacker_delivered_datagrams=attacker_delivered,
        detection_latency_s=det,
        identification_latency_s=ident,
        false_blocks=false_blocks,
        false_block_rate=100.0 * false_blocks / sent if sent else 0.0,
        avg_power_mw=statistics.fmean(non_attacker_power),
        root_power_mw=result.node_power_mw[0],
        attacker_power_mw=(
            result.node_power_mw[attacker] if attacker is not None else None
        ),
        mean_availability=result.mean_availability,
        max_occupancy=result.max_occupancy,
        conservation_ok=stray == 0,
    )


# Fields aggregated numerically across seeds. Latencies are handled
# separately because individual runs may have None there.
_NUMERIC_FIELDS = (
    "pdr",
    "sent_datagrams",
    "delivered_datagrams",
    "legit_drop_rate",
    "false_blocks",
    "false_block_rate",
    "avg_power_mw",
    "root_power_mw",
    "mean_availability",
    "max_occupancy",
)
_LATENCY_FIELDS = ("detection_latency_s", "identification_latency_s")


def _stats(values: list[float]) -> dict[str, float]:
    return {
        "mean": statistics.fmean(values),
        "stdev": statistics.stdev(values) if len(values) > 1 else 0.0,
        "min": min(values),
        "max": max(values),
        "median": statistics.median(values),
    }


def aggregate(runs: list[RunMetrics]) -> dict:
    """Cross-seed summary statistics for one scenario.

    Latency fields additionally report a rate: the fraction of runs in
    which the stack actually reached that state.
    """
    if not runs:
        raise ValueError("nothing to aggregate: no runs given")
    out: dict = {
        "name": runs[0].name,
        "stack": runs[0].stack,
        "attack_kind": runs[0].attack_kind,
        "runs": len(runs),
        "seeds": [m.seed for m in runs],
    }
    for field_name in _NUMERIC_FIELDS:
        out[field_name] = _stats([float(getattr(m, field_name)) for m in runs])
    for field_name in _LATENCY_FIELDS:
        present = [getattr(m, field_name) for m in runs]
        known = [v for v in present if v is not None]
        rate_key = field_name.replace("_latency_s", "_rate")
        out[rate_key] = len(known) / len(runs)
        out[field_name] = _stats(known) if known else None
    out["conservation_ok"] = all(m.conservation_ok for m in runs)
    return out


def render_table(rows: list[dict], columns: list[str]) -> str:
    """Left-aligned plain-text table of preformatted row dicts."""
    cells = [[str(row.get(c, "")) for c in columns] for row in rows]
    widths = [
        max(len(col), *(len(r[i]) for r in cells)) if cells else len(col)
        for i, col in enumerate(columns)
    ]
    lines = [
        "  ".join(col.ljust(w) for col, w in zip(columns, widths)),
        "  ".join("-" * w for w in widths),
    ]
    for r in cells:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
    return "\n".join(line.rstrip() for line in lines)
