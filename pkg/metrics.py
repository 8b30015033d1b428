"""
Evaluation metrics: per-round rejection and occupancy records, phase
aggregates, smoothing and serialization (CSV and key/value summary).

Rejection rates are mass-weighted: the sum of r x d of rejected requests
divided by the sum of r x d of all requests resolved in the same period.
Rejections are attributed to the round in which they happen.
"""
import logging
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from models import SERVICE_ORDER, FlowKey, Mode, Scenario, ServiceKind

logger = logging.getLogger(__name__)

PHASES = ("pre", "emergency", "post")
ALL = "all"
REJECTION_ATTRIBUTION = "round_of_rejection"

CSV_COLUMNS = [
    "round", "mode", "vo", "service",
    "rejected_mass", "resolved_mass", "rejection_rate", "occupancy", "buffer_depth",
    "preempted_mass", "arrived_mass", "rejection_rate_smoothed", "occupancy_smoothed",
]


def rejection_rate(rejected_mass: float, resolved_mass: float) -> Optional[float]:
    """Rejected over resolved mass; None (not zero) when nothing was resolved."""
    if rejected_mass < 0 or resolved_mass < 0:
        raise ValueError("masses must be non-negative")
    if resolved_mass == 0:
        return None
    return rejected_mass / resolved_mass


class FlowRoundStats(BaseModel):
    """One round of one (operator, service) flow."""
    arrived_mass: int = 0
    rejected_mass: int = 0
    resolved_mass: int = 0
    preempted_mass: int = 0
    occupancy: float = 0.0
    buffer_depth: int = 0

    @property
    def rejection_rate(self) -> Optional[float]:
        # a dropped service was resolved in an earlier round; per round its remainder joins both sides
        return rejection_rate(self.rejected_mass + self.preempted_mass,
                              self.resolved_mass + self.preempted_mass)


class RoundMetrics(BaseModel):
    """Everything recorded about one allocation round."""
    round: int
    mode: Mode
    flows: Dict[FlowKey, FlowRoundStats]
    total_occupancy: float = Field(ge=0.0, le=1.0)
    preempted_count: int = 0
    buffer_depth: int = 0

    @property
    def preempted_mass(self) -> int:
        return sum(s.preempted_mass for s in self.flows.values())


def smooth(series: Sequence[Optional[float]], window: int) -> List[Optional[float]]:
    """
    Centered moving average that skips absent values; length is preserved.

    Positions whose whole window is absent stay absent.
    """
    if window < 1:
        raise ValueError(f"smoothing window must be at least 1, got {window}")
    values = pd.Series([np.nan if v is None else float(v) for v in series], dtype=float)
    smoothed = values.rolling(window, center=True, min_periods=1).mean()
    return [None if np.isnan(v) else float(v) for v in smoothed]


def phase_of(round_index: int, scenario: Scenario) -> str:
    if round_index < scenario.emergency_start:
        return "pre"
    if round_index < scenario.emergency_end:
        return "emergency"
    return "post"


class PhaseFlowSummary(BaseModel):
    """Aggregate of one phase for a flow, an operator (service ``all``), a service (operator ``all``) or everything."""
    phase: str
    operator: str
    service: str
    rounds: int
    arrived_mass: int
    rejected_mass: int
    preempted_mass: int
    resolved_mass: int
    rejection_rate: Optional[float]
    preemption_rate: Optional[float]
    mean_occupancy: float
    served_share: Optional[float]
    requested_share: Optional[float]

    @property
    def key(self) -> str:
        return f"{self.phase}.{self.operator}.{self.service}"


def _groups(flows: Sequence[FlowKey]) -> List[Tuple[str, str, List[FlowKey]]]:
    groups = [(op, kind.value, [(op, kind)]) for op, kind in flows]
    operators = list(dict.fromkeys(op for op, _ in flows))
    kinds = [k for k in SERVICE_ORDER if any(kind == k for _, kind in flows)]
    groups += [(op, ALL, [fk for fk in flows if fk[0] == op]) for op in operators]
    groups += [(ALL, k.value, [fk for fk in flows if fk[1] == k]) for k in kinds]
    groups.append((ALL, ALL, list(flows)))
    return groups


def horizon_exclusions(events: Iterable, scenario: Scenario) -> Dict[Tuple[str, FlowKey], int]:
    """
    Mass of services still running at the horizon, keyed by (phase embedded in, flow).

    Those services never resolve inside the run, so they leave the denominators.
    """
    embedded_round: Dict[int, int] = {}
    excluded: Dict[Tuple[str, FlowKey], int] = {}
    for ev in events:
        if ev.event == "embedded":
            embedded_round[ev.vrr_id] = ev.round
        elif ev.event == "active_at_horizon":
            phase = phase_of(embedded_round.get(ev.vrr_id, ev.round), scenario)
            key = (phase, (ev.owner, ServiceKind(ev.service)))
            excluded[key] = excluded.get(key, 0) + ev.r * ev.d
    return excluded


def phase_summary(rounds: Sequence[RoundMetrics], scenario: Scenario,
                  events: Optional[Iterable] = None) -> List[PhaseFlowSummary]:
    """
    Per phase (pre, emergency, post): mass-weighted rejection rates, mean
    occupancy, served share of occupied capacity and requested share of
    arrived mass, for every flow, operator, service and overall.

    Args:
        rounds: per-round records of one run
        scenario: gives the phase boundaries and the flows
        events: optional event log; services active at the horizon are then
            removed from the resolved mass of the phase they were embedded in

    The remaining mass of preempted services counts as rejected against the
    resolved mass, which already holds their full r x d from embedding.
    """
    flows = scenario.flows
    excluded = horizon_exclusions(events, scenario) if events is not None else {}
    by_phase: Dict[str, List[RoundMetrics]] = {p: [] for p in PHASES}
    for rm in rounds:
        by_phase[phase_of(rm.round, scenario)].append(rm)

    summaries: List[PhaseFlowSummary] = []
    for phase in PHASES:
        records = by_phase[phase]
        n = len(records)
        totals: Dict[FlowKey, Dict[str, float]] = {}
        for fk in flows:
            acc = {"arrived": 0, "rejected": 0, "preempted": 0, "resolved": 0, "occupancy": 0.0}
            for rm in records:
                stats = rm.flows.get(fk)
                if stats is None:
                    continue
                acc["arrived"] += stats.arrived_mass
                acc["rejected"] += stats.rejected_mass
                acc["preempted"] += stats.preempted_mass
                acc["resolved"] += stats.resolved_mass
                acc["occupancy"] += stats.occupancy
            acc["resolved"] -= excluded.get((phase, fk), 0)
            totals[fk] = acc
        all_arrived = sum(t["arrived"] for t in totals.values())
        all_occupancy = sum(t["occupancy"] for t in totals.values())

        for operator, service, members in _groups(flows):
            arrived = sum(totals[fk]["arrived"] for fk in members)
            rejected = sum(totals[fk]["rejected"] for fk in members)
            preempted = sum(totals[fk]["preempted"] for fk in members)
            resolved = sum(totals[fk]["resolved"] for fk in members)
            occupancy = sum(totals[fk]["occupancy"] for fk in members)
            summaries.append(PhaseFlowSummary(
                phase=phase,
                operator=operator,
                service=service,
                rounds=n,
                arrived_mass=arrived,
                rejected_mass=rejected,
                preempted_mass=preempted,
                resolved_mass=resolved,
                rejection_rate=rejection_rate(rejected + preempted, resolved),
                preemption_rate=rejection_rate(preempted, resolved),
                mean_occupancy=occupancy / n if n else 0.0,
                served_share=occupancy / all_occupancy if all_occupancy > 0 else None,
                requested_share=arrived / all_arrived if all_arrived > 0 else None,
            ))
    return summaries


def find_summary(summaries: Sequence[PhaseFlowSummary], phase: str, operator: str = ALL,
                 service: str = ALL) -> PhaseFlowSummary:
    for s in summaries:
        if s.phase == phase and s.operator == operator and s.service == service:
            return s
    raise KeyError(f"{phase}.{operator}.{service}")


def metrics_frame(rounds: Sequence[RoundMetrics], smoothing_window: int = 1) -> pd.DataFrame:
    """One row per (round, operator, service), columns as in :data:`CSV_COLUMNS`."""
    rows = []
    for rm in rounds:
        for (owner, kind), stats in rm.flows.items():
            rows.append({
                "round": rm.round,
                "mode": rm.mode.value,
                "vo": owner,
                "service": kind.value,
                "rejected_mass": stats.rejected_mass,
                "resolved_mass": stats.resolved_mass,
                "rejection_rate": stats.rejection_rate,
                "occupancy": stats.occupancy,
                "buffer_depth": stats.buffer_depth,
                "preempted_mass": stats.preempted_mass,
                "arrived_mass": stats.arrived_mass,
            })
    frame = pd.DataFrame(rows, columns=CSV_COLUMNS[:-2])
    frame["rejection_rate"] = frame["rejection_rate"].astype(float)
    frame["occupancy"] = frame["occupancy"].astype(float)
    frame["rejection_rate_smoothed"] = np.nan
    frame["occupancy_smoothed"] = np.nan
    for _, index in frame.groupby(["vo", "service"], sort=False).groups.items():
        part = frame.loc[index]
        rates = [None if pd.isna(v) else v for v in part["rejection_rate"]]
        frame.loc[index, "rejection_rate_smoothed"] = [np.nan if v is None else v
                                                       for v in smooth(rates, smoothing_window)]
        frame.loc[index, "occupancy_smoothed"] = smooth(list(part["occupancy"]), smoothing_window)
    return frame[CSV_COLUMNS]


def write_metrics_csv(frame: pd.DataFrame, path: str) -> None:
    """Write a :func:`metrics_frame` table; absent rates are empty cells."""
    frame.to_csv(path, index=False, float_format="%.6f", na_rep="")
    logger.info(f"Wrote {len(frame)} metric rows to {path}")


def read_metrics_csv(path: str) -> pd.DataFrame:
    return pd.read_csv(path, keep_default_na=True)


def group_rejection_series(frame: pd.DataFrame, vo: Optional[str] = None,
                           services: Optional[Iterable[str]] = None) -> pd.Series:
    """Per-round mass-weighted rejection rate of a group of flows (NaN where nothing resolved)."""
    part = frame
    if vo is not None:
        part = part[part["vo"] == vo]
    if services is not None:
        part = part[part["service"].isin(list(services))]
    grouped = part.groupby("round")[["rejected_mass", "preempted_mass", "resolved_mass"]].sum()
    denied = grouped["rejected_mass"] + grouped["preempted_mass"]
    resolved = grouped["resolved_mass"] + grouped["preempted_mass"]
    return (denied / resolved.where(resolved > 0)).astype(float)


def _fmt(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def summary_text(summaries: Sequence[PhaseFlowSummary], meta: Mapping[str, object]) -> str:
    """
    Key/value document with stable key names, e.g.
    ``phase.emergency.PS.voice.rejection_rate = 0.000000``; absent values print as NA.
    """
    lines = [f"meta.{key} = {_fmt(value)}" for key, value in meta.items()]
    fields = ["rounds", "arrived_mass", "rejected_mass", "preempted_mass", "resolved_mass",
              "rejection_rate", "preemption_rate", "mean_occupancy", "served_share", "requested_share"]
    for s in summaries:
        for name in fields:
            lines.append(f"phase.{s.key}.{name} = {_fmt(getattr(s, name))}")
    return "\n".join(lines) + "\n"


def write_summary(summaries: Sequence[PhaseFlowSummary], meta: Mapping[str, object], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(summary_text(summaries, meta))
    logger.info(f"Wrote summary to {path}")


SUMMARY_METRICS = ["rejection_rate", "preemption_rate", "mean_occupancy", "served_share", "requested_share"]
_KEYS = ["phase", "operator", "service"]


def _long(phase_frame: pd.DataFrame) -> pd.DataFrame:
    long = phase_frame.melt(id_vars=["algorithm", "seed", *_KEYS], value_vars=SUMMARY_METRICS,
                            var_name="metric", value_name="value")
    # NULL columns come back from SQL as object dtype
    long["value"] = pd.to_numeric(long["value"], errors="coerce")
    return long


def aggregate_frame(phase_frame: pd.DataFrame) -> pd.DataFrame:
    """
    Mean and standard deviation across seeds: one row per (algorithm, phase,
    operator, service, metric). ``n`` counts the seeds with a defined value;
    the deviation of a single seed is 0.
    """
    if phase_frame.empty:
        return pd.DataFrame(columns=["algorithm", *_KEYS, "metric", "mean", "std", "n"])
    grouped = _long(phase_frame).groupby(["algorithm", *_KEYS, "metric"], sort=False)["value"]
    table = grouped.agg(["mean", "std", "count"]).reset_index().rename(columns={"count": "n"})
    table["std"] = table["std"].where(table["n"] > 1, 0.0)
    return table


def paired_frame(phase_frame: pd.DataFrame, baseline: str = "static", candidate: str = "dynamic") -> pd.DataFrame:
    """
    Per seed comparison of two engines: one row per (seed, phase, operator,
    service, metric) with both values and ``diff = candidate - baseline``.
    Empty when either engine is missing.
    """
    columns = ["seed", *_KEYS, "metric", baseline, candidate, "diff"]
    present = set(phase_frame["algorithm"]) if not phase_frame.empty else set()
    if baseline not in present or candidate not in present:
        return pd.DataFrame(columns=columns)
    long = _long(phase_frame)
    keys = ["seed", *_KEYS, "metric"]
    left = long[long["algorithm"] == baseline].drop(columns="algorithm").rename(columns={"value": baseline})
    right = long[long["algorithm"] == candidate].drop(columns="algorithm").rename(columns={"value": candidate})
    table = left.merge(right, on=keys, how="inner")
    table["diff"] = table[candidate] - table[baseline]
    return table[columns]
