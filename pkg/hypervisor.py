"""
The hypervisor round loop: buffering, aging, mode switching, engine
invocation, expiry and metric emission.

Within a round: mode switch, arrivals, embedding, buffer aging and
rejection, occupancy snapshot, then expiry of services whose duration is
used up. A request can therefore be embedded in its arrival round, and a
service of duration d embedded in round n holds its blocks in rounds
n .. n+d-1.
"""
import itertools
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, NamedTuple, Optional, Tuple, Union

from embedder import (Outcome, QueueEntry, decisions_substrate, embed_dynamic, embed_oracle,
                      embed_static, order_queue)
from grid import Rect, Substrate
from metrics import REJECTION_ATTRIBUTION, FlowRoundStats, PhaseFlowSummary, RoundMetrics, phase_summary
from models import Algorithm, Mode, Scenario
from traffic import Rng, generate_round
from vrr import VRR, priority_of

logger = logging.getLogger(__name__)


class EventRecord(NamedTuple):
    """One line of the event log."""
    round: int
    vrr_id: int
    owner: str
    service: str
    event: str
    r: int
    d: int
    rect: Optional[Rect] = None

    def to_json(self) -> str:
        record = self._asdict()
        record["rect"] = list(self.rect) if self.rect is not None else None
        return json.dumps(record)


@dataclass
class ActiveService:
    vrr: VRR
    remaining: int
    rect: Rect


@dataclass
class SimState:
    """Mutable state of one simulation run."""
    scenario: Scenario
    algorithm: Algorithm
    rng: Rng
    substrate: Substrate
    round: int = 0
    mode: Mode = Mode.NORMAL
    buffer: List[VRR] = field(default_factory=list)
    active: Dict[int, ActiveService] = field(default_factory=dict)
    events: List[EventRecord] = field(default_factory=list)
    ids: Iterator[int] = field(default_factory=itertools.count)

    def log(self, vrr: VRR, event: str, rect: Optional[Rect] = None) -> None:
        self.events.append(EventRecord(self.round, vrr.id, vrr.owner, vrr.service.value,
                                       event, vrr.r, vrr.d, rect))


@dataclass
class SimResult:
    """Output of :func:`run`: per-round metrics, event log and phase summary."""
    scenario: Scenario
    seed: int
    algorithm: Algorithm
    rounds: List[RoundMetrics]
    events: List[EventRecord]
    summary: List[PhaseFlowSummary]
    meta: Dict[str, Any]


def mode_at(round_index: int, scenario: Scenario) -> Mode:
    """Emergency mode inside [emergency_start, emergency_end), normal otherwise."""
    if scenario.emergency_start <= round_index < scenario.emergency_end:
        return Mode.EMERGENCY
    return Mode.NORMAL


def new_state(scenario: Scenario, seed: int, algorithm: Optional[Union[Algorithm, str]] = None) -> SimState:
    algorithm = Algorithm(algorithm or scenario.algorithm)
    substrate = Substrate(scenario.F, scenario.T, scenario.options.edi_border_occupied)
    return SimState(scenario=scenario, algorithm=algorithm, rng=Rng(seed), substrate=substrate,
                    mode=mode_at(0, scenario))


def _active_entries(state: SimState, mode: Mode) -> List[QueueEntry]:
    policy = state.scenario.policy
    return [QueueEntry(svc.vrr, priority_of(svc.vrr.owner, svc.vrr.service, mode, policy), active=True)
            for svc in state.active.values()]


def _embed(state: SimState, queue: List[QueueEntry], mode: Mode):
    scenario = state.scenario
    dims = (scenario.F, scenario.T)
    border = scenario.options.edi_border_occupied
    if state.algorithm == Algorithm.STATIC:
        decisions, _ = embed_static(state.substrate, queue)
    elif state.algorithm == Algorithm.DYNAMIC:
        decisions, state.substrate = embed_dynamic(_active_entries(state, mode), queue, dims, border)
    else:
        result = embed_oracle(_active_entries(state, mode) + queue, dims)
        decisions = result.decisions
        state.substrate = decisions_substrate(decisions, dims, border)
    return decisions


def step(state: SimState) -> Tuple[SimState, RoundMetrics]:
    """
    Advance the simulation by one round.

    Returns:
        The (mutated) state and the round's metrics
    """
    scenario = state.scenario
    n = state.round
    if n >= scenario.horizon:
        raise ValueError(f"round {n} is beyond the horizon {scenario.horizon}")

    mode = mode_at(n, scenario)
    if mode != state.mode:
        logger.info(f"Round {n}: hypervisor switches to {mode.value} operation")
        state.mode = mode
    flows = {fk: FlowRoundStats() for fk in scenario.flows}
    specs = scenario.service_specs

    arrivals = generate_round(scenario, n, mode, state.rng, state.ids)
    for vrr in arrivals:
        state.log(vrr, "arrived")
        flows[vrr.flow].arrived_mass += vrr.mass
    held: List[VRR] = []
    if scenario.options.arrivals_eligible_same_round:
        state.buffer.extend(arrivals)
    else:
        held = arrivals

    queue = order_queue(state.buffer, mode, scenario.policy)
    buffered = {vrr.id: vrr for vrr in state.buffer}
    decisions = _embed(state, queue, mode)

    preempted_count = 0
    for decision in decisions:
        running = state.active.get(decision.vrr_id)
        if running is not None:
            if decision.outcome == Outcome.EMBEDDED:
                running.rect = decision.rect
            elif decision.outcome == Outcome.PREEMPTED:
                vrr = running.vrr
                flows[vrr.flow].preempted_mass += vrr.r * running.remaining
                state.log(vrr, "preempted", running.rect)
                del state.active[vrr.id]
                preempted_count += 1
        elif decision.outcome == Outcome.EMBEDDED:
            vrr = buffered[decision.vrr_id]
            state.active[vrr.id] = ActiveService(vrr, vrr.d, decision.rect)
            flows[vrr.flow].resolved_mass += vrr.mass
            state.log(vrr, "embedded", decision.rect)
    if preempted_count:
        logger.warning(f"Round {n}: {preempted_count} running services preempted")

    still_waiting: List[VRR] = []
    for vrr in state.buffer:
        if vrr.id in state.active:
            continue
        if vrr.waited >= specs[vrr.service].max_delay:
            flows[vrr.flow].rejected_mass += vrr.mass
            flows[vrr.flow].resolved_mass += vrr.mass
            state.log(vrr, "rejected")
        else:
            vrr.waited += 1
            still_waiting.append(vrr)
    state.buffer = still_waiting + held

    owners = {pid: svc.vrr.flow for pid, svc in state.active.items()}
    split, total = state.substrate.occupancy_split(owners)
    for fk, fraction in split.items():
        flows[fk].occupancy = fraction
    for vrr in state.buffer:
        flows[vrr.flow].buffer_depth += 1

    for pid in list(state.active):
        svc = state.active[pid]
        svc.remaining -= 1
        if svc.remaining == 0:
            state.substrate.remove(pid)
            state.log(svc.vrr, "expired", svc.rect)
            del state.active[pid]

    metrics = RoundMetrics(round=n, mode=mode, flows=flows, total_occupancy=total,
                           preempted_count=preempted_count, buffer_depth=len(state.buffer))
    logger.debug(f"Round {n}: {len(arrivals)} arrivals, occupancy {total:.3f}, buffer {len(state.buffer)}")
    state.round += 1
    return state, metrics


def finish(state: SimState) -> None:
    """Record the terminal state of services and requests still present at the horizon."""
    for svc in state.active.values():
        state.log(svc.vrr, "active_at_horizon", svc.rect)
    for vrr in state.buffer:
        state.log(vrr, "buffered_at_horizon")


def run(scenario: Scenario, seed: int, algorithm: Optional[Union[Algorithm, str]] = None) -> SimResult:
    """
    Execute every round of a scenario.

    Args:
        scenario: validated scenario
        seed: seed of all random streams
        algorithm: engine override (the scenario's ``algorithm`` otherwise)

    Returns:
        SimResult with per-round metrics, the event log and the phase summary
    """
    state = new_state(scenario, seed, algorithm)
    logger.info(f"Starting {state.algorithm.value} run: seed={seed}, horizon={scenario.horizon}, "
                f"substrate={scenario.F}x{scenario.T}")
    rounds: List[RoundMetrics] = []
    while state.round < scenario.horizon:
        state, metrics = step(state)
        rounds.append(metrics)
    finish(state)

    summary = phase_summary(rounds, scenario, state.events)
    meta = {
        "algorithm": state.algorithm.value,
        "seed": seed,
        "horizon": scenario.horizon,
        "substrate": f"{scenario.F}x{scenario.T}",
        "emergency": f"{scenario.emergency_start}..{scenario.emergency_end}",
        "rejection_attribution": REJECTION_ATTRIBUTION,
        "generated": sum(1 for ev in state.events if ev.event == "arrived"),
        "active_at_horizon": len(state.active),
        "buffered_at_horizon": len(state.buffer),
    }
    logger.info(f"Finished {state.algorithm.value} run: seed={seed}, {meta['generated']} requests generated")
    return SimResult(scenario, seed, state.algorithm, rounds, state.events, summary, meta)


def write_events(events: List[EventRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(ev.to_json() + "\n")
    logger.info(f"Wrote {len(events)} events to {path}")
