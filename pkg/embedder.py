"""
Embedding engines: static Karnaugh-map, dynamic (re-embedding) Karnaugh-map,
and an exhaustive oracle for small instances.

Both heuristics share :func:`try_embed_one`: among the maximal free
rectangles that admit one of the request's shapes pick the smallest, then
place the request at whichever of that region's four corners leaves the
lowest Embedding Density Index.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

from errors import TooLarge
from grid import Rect, Substrate
from models import Mode, PriorityPolicy
from vrr import VRR, priority_of

logger = logging.getLogger(__name__)

ORACLE_MAX_CELLS = 36
ORACLE_MAX_REQUESTS = 6


class Outcome(str, Enum):
    EMBEDDED = "embedded"
    DEFERRED = "deferred"
    REJECTED = "rejected"
    PREEMPTED = "preempted"


class EmbedDecision(NamedTuple):
    """What an engine did with one request this round."""
    vrr_id: int
    outcome: Outcome
    rect: Optional[Rect] = None


@dataclass(frozen=True)
class QueueEntry:
    """A request together with its priority level under the current mode."""
    vrr: VRR
    priority: int
    active: bool = False

    @property
    def area(self) -> int:
        return self.vrr.area

    def static_key(self) -> Tuple:
        return (-self.priority, -self.area, self.vrr.arrival_round, self.vrr.id)

    def dynamic_key(self) -> Tuple:
        # running services go before new ones of the same priority
        return (-self.priority, 0 if self.active else 1, -self.area, self.vrr.arrival_round, self.vrr.id)


def order_queue(vrrs: Iterable[VRR], mode: Mode, policy: PriorityPolicy, active: bool = False) -> List[QueueEntry]:
    """
    Attach priorities to requests and order them for embedding.

    Order: priority descending, shaped area descending, arrival round
    ascending, id ascending.
    """
    entries = [QueueEntry(v, priority_of(v.owner, v.service, mode, policy), active) for v in vrrs]
    entries.sort(key=QueueEntry.static_key)
    return entries


def try_embed_one(substrate: Substrate, vrr: VRR) -> Optional[Rect]:
    """
    Find where the Karnaugh-map heuristic would embed ``vrr``.

    Args:
        substrate: current occupancy (not modified)
        vrr: request whose shape candidates are tried jointly with the regions

    Returns:
        The chosen rectangle, or None when no free region admits any shape
    """
    shapes = [(f, t) for f, t in vrr.shapes if f <= substrate.F and t <= substrate.T]
    if not shapes or substrate.free_count < min(f * t for f, t in shapes):
        return None

    best_region: Optional[Rect] = None
    best_shape = None
    for region in substrate.maximal_free_rectangles():
        if best_region is not None and region.area >= best_region.area:
            continue
        for f, t in shapes:
            if f <= region.f and t <= region.t:
                best_region, best_shape = region, (f, t)
                break
    if best_region is None:
        return None

    base = substrate.edi()
    corners = best_region.corners(*best_shape)
    # min keeps the first of equal scores: TL, TR, BL, BR
    return min(corners, key=lambda c: substrate.edi_if_placed(c, base))


def embed_static(substrate: Substrate, queue: Sequence[QueueEntry]) -> Tuple[List[EmbedDecision], Substrate]:
    """
    Embed queued requests around the existing placements, which never move.

    The substrate is updated in place and also returned. Requests that do not
    fit are reported as deferred; the hypervisor decides when they expire.
    """
    decisions: List[EmbedDecision] = []
    for entry in queue:
        rect = try_embed_one(substrate, entry.vrr)
        if rect is None:
            decisions.append(EmbedDecision(entry.vrr.id, Outcome.DEFERRED))
            continue
        substrate.place(rect, entry.vrr.id)
        decisions.append(EmbedDecision(entry.vrr.id, Outcome.EMBEDDED, rect))
    logger.debug(f"Static embedding: {sum(d.outcome == Outcome.EMBEDDED for d in decisions)}/{len(queue)} placed")
    return decisions, substrate


def embed_dynamic(active: Sequence[QueueEntry], queue: Sequence[QueueEntry], dims: Tuple[int, int],
                  border_occupied: bool = False) -> Tuple[List[EmbedDecision], Substrate]:
    """
    Re-embed every running service together with the buffered requests on a cleared substrate.

    Args:
        active: running services (``active=True`` entries) with their current priorities
        queue: buffered new requests
        dims: (F, T)
        border_occupied: EDI variant of the fresh substrate

    Returns:
        Decisions (a running service that no longer fits is preempted) and the fresh substrate
    """
    F, T = dims
    substrate = Substrate(F, T, border_occupied)
    entries = sorted([*active, *queue], key=QueueEntry.dynamic_key)
    decisions: List[EmbedDecision] = []
    for entry in entries:
        rect = try_embed_one(substrate, entry.vrr)
        if rect is not None:
            substrate.place(rect, entry.vrr.id)
            decisions.append(EmbedDecision(entry.vrr.id, Outcome.EMBEDDED, rect))
        elif entry.active:
            decisions.append(EmbedDecision(entry.vrr.id, Outcome.PREEMPTED))
        else:
            decisions.append(EmbedDecision(entry.vrr.id, Outcome.DEFERRED))
    preempted = sum(d.outcome == Outcome.PREEMPTED for d in decisions)
    if preempted:
        logger.debug(f"Dynamic embedding preempted {preempted} running services")
    return decisions, substrate


class OracleResult(NamedTuple):
    decisions: List[EmbedDecision]
    objective: Tuple[int, ...]
    levels: Tuple[int, ...]


def priority_levels(entries: Iterable[QueueEntry]) -> Tuple[int, ...]:
    return tuple(sorted({e.priority for e in entries}, reverse=True))


def lexicographic_objective(entries: Sequence[QueueEntry], decisions: Iterable[EmbedDecision],
                            levels: Optional[Tuple[int, ...]] = None) -> Tuple[int, ...]:
    """Embedded rectangle area per priority level, highest level first."""
    levels = priority_levels(entries) if levels is None else levels
    priority = {e.vrr.id: e.priority for e in entries}
    totals = {lvl: 0 for lvl in levels}
    for decision in decisions:
        if decision.outcome == Outcome.EMBEDDED:
            totals[priority[decision.vrr_id]] += decision.rect.area
    return tuple(totals[lvl] for lvl in levels)


def _rect_mask(rect: Rect, F: int) -> int:
    row = ((1 << rect.f) - 1) << rect.f0
    mask = 0
    for t in range(rect.t0, rect.t1):
        mask |= row << (t * F)
    return mask


def embed_oracle(entries: Sequence[QueueEntry], dims: Tuple[int, int]) -> OracleResult:
    """
    Exhaustively find the placement set maximizing embedded area level by level.

    Searches every subset, shape and position, with identical requests
    forced into increasing position order and branches cut by a
    capacity-capped subset-sum upper bound. Running (``active``) entries go
    first within a priority level; those left out are reported as preempted,
    new ones as deferred.

    Raises:
        TooLarge: when F*T exceeds 36 cells or more than 6 requests are given
    """
    F, T = dims
    if F * T > ORACLE_MAX_CELLS or len(entries) > ORACLE_MAX_REQUESTS:
        raise TooLarge(f"oracle handles at most {ORACLE_MAX_REQUESTS} requests on "
                       f"{ORACLE_MAX_CELLS} cells, got {len(entries)} on {F}x{T}")

    levels = priority_levels(entries)
    level_of = {lvl: i for i, lvl in enumerate(levels)}
    order = sorted(entries, key=QueueEntry.dynamic_key)
    n, n_levels = len(order), len(levels)

    options: List[List[Tuple[int, Rect]]] = []
    for entry in order:
        opts = []
        for f, t in entry.vrr.shapes:
            if f > F or t > T:
                continue
            for t0 in range(T - t + 1):
                for f0 in range(F - f + 1):
                    rect = Rect(f0, t0, f, t)
                    opts.append((_rect_mask(rect, F), rect))
        options.append(opts)

    same_as_prev = [k > 0 and order[k].priority == order[k - 1].priority
                    and order[k].active == order[k - 1].active
                    and tuple(order[k].vrr.shapes) == tuple(order[k - 1].vrr.shapes)
                    for k in range(n)]
    areas = [sorted({rect.area for _, rect in opts}) for opts in options]
    level_idx = [level_of[entry.priority] for entry in order]

    capacity = F * T
    best: dict = {"vec": None, "choice": None}
    choice: List[int] = [-1] * n
    vec = [0] * n_levels

    def upper_bound(k: int, used: int) -> Tuple[int, ...]:
        # per level, the largest sum of areas of requests k..n-1 that fits in the free cells
        cap = capacity - used
        bound = []
        for li in range(n_levels):
            reach = 1
            for j in range(k, n):
                if level_idx[j] != li or not areas[j]:
                    continue
                grown = reach
                for a in areas[j]:
                    grown |= reach << a
                reach = grown & ((1 << (cap + 1)) - 1)
            add = reach.bit_length() - 1
            bound.append(vec[li] + add)
            cap -= add
        return tuple(bound)

    def search(k: int, occupied: int, used: int) -> None:
        if best["vec"] is not None and upper_bound(k, used) <= best["vec"]:
            return
        if k == n:
            best["vec"] = tuple(vec)
            best["choice"] = list(choice)
            return
        li = level_idx[k]
        start = 0
        if same_as_prev[k]:
            if choice[k - 1] < 0:
                choice[k] = -1
                search(k + 1, occupied, used)
                return
            start = choice[k - 1] + 1
        for idx in range(start, len(options[k])):
            mask, rect = options[k][idx]
            if mask & occupied:
                continue
            choice[k] = idx
            vec[li] += rect.area
            search(k + 1, occupied | mask, used + rect.area)
            vec[li] -= rect.area
        choice[k] = -1
        search(k + 1, occupied, used)

    search(0, 0, 0)

    placed = {}
    for k, idx in enumerate(best["choice"] or []):
        if idx >= 0:
            placed[order[k].vrr.id] = options[k][idx][1]
    decisions = []
    for entry in entries:
        rect = placed.get(entry.vrr.id)
        if rect is not None:
            decisions.append(EmbedDecision(entry.vrr.id, Outcome.EMBEDDED, rect))
        elif entry.active:
            decisions.append(EmbedDecision(entry.vrr.id, Outcome.PREEMPTED))
        else:
            decisions.append(EmbedDecision(entry.vrr.id, Outcome.DEFERRED))
    return OracleResult(decisions, best["vec"] or tuple(0 for _ in levels), levels)


def decisions_substrate(decisions: Iterable[EmbedDecision], dims: Tuple[int, int],
                        border_occupied: bool = False) -> Substrate:
    """Build a substrate holding every embedded decision (used after an oracle repack)."""
    substrate = Substrate(dims[0], dims[1], border_occupied)
    for decision in decisions:
        if decision.outcome == Outcome.EMBEDDED:
            substrate.place(decision.rect, decision.vrr_id)
    return substrate
