"""
The F x T resource substrate: occupancy state, free-region discovery and the
Embedding Density Index (EDI).

Frequency runs along columns (width ``f``) and time along rows (height ``t``);
the origin ``(0, 0)`` is the top-left block. Rectangles are always reported
as ``(f0, t0, f, t)``.
"""
import logging
from typing import Dict, Hashable, List, Mapping, NamedTuple, Optional, Tuple

import numpy as np

from errors import DuplicateId, OutOfBounds, Overlap, UnknownId

logger = logging.getLogger(__name__)


class Rect(NamedTuple):
    """Axis-aligned block of PRBs: origin column/row plus width/height."""
    f0: int
    t0: int
    f: int
    t: int

    @property
    def area(self) -> int:
        return self.f * self.t

    @property
    def f1(self) -> int:
        return self.f0 + self.f

    @property
    def t1(self) -> int:
        return self.t0 + self.t

    def corners(self, f: int, t: int) -> List["Rect"]:
        """Placements of an f x t block at this region's corners: TL, TR, BL, BR."""
        right = self.f1 - f
        bottom = self.t1 - t
        return [
            Rect(self.f0, self.t0, f, t),
            Rect(right, self.t0, f, t),
            Rect(self.f0, bottom, f, t),
            Rect(right, bottom, f, t),
        ]


class Substrate:
    """
    Occupancy map of F x T resource blocks plus the registry of placements.

    Every occupied cell belongs to exactly one registered placement and
    placements never overlap. ``border_occupied`` switches the EDI variant
    in which the substrate border counts as occupied.
    """

    def __init__(self, F: int, T: int, border_occupied: bool = False):
        if F < 1 or T < 1:
            raise ValueError(f"substrate dimensions must be positive, got {F}x{T}")
        self.F = F
        self.T = T
        self.border_occupied = border_occupied
        self.cells = np.zeros((T, F), dtype=bool)
        self.placements: Dict[Hashable, Rect] = {}

    def copy(self) -> "Substrate":
        clone = Substrate(self.F, self.T, self.border_occupied)
        clone.cells = self.cells.copy()
        clone.placements = dict(self.placements)
        return clone

    @property
    def capacity(self) -> int:
        return self.F * self.T

    @property
    def occupied_count(self) -> int:
        return int(np.count_nonzero(self.cells))

    @property
    def free_count(self) -> int:
        return self.capacity - self.occupied_count

    def in_bounds(self, rect: Rect) -> bool:
        return (rect.f >= 1 and rect.t >= 1 and rect.f0 >= 0 and rect.t0 >= 0
                and rect.f1 <= self.F and rect.t1 <= self.T)

    def is_free(self, rect: Rect) -> bool:
        return not self.cells[rect.t0:rect.t1, rect.f0:rect.f1].any()

    def _check_placeable(self, rect: Rect) -> None:
        if not self.in_bounds(rect):
            raise OutOfBounds(f"{tuple(rect)} does not fit in {self.F}x{self.T}")
        if not self.is_free(rect):
            raise Overlap(f"{tuple(rect)} overlaps an existing placement")

    def place(self, rect: Rect, placement_id: Hashable) -> "Substrate":
        """
        Mark ``rect`` occupied and register it under ``placement_id``.

        Raises:
            OutOfBounds, Overlap, DuplicateId
        """
        if placement_id in self.placements:
            raise DuplicateId(placement_id)
        self._check_placeable(rect)
        self.cells[rect.t0:rect.t1, rect.f0:rect.f1] = True
        self.placements[placement_id] = rect
        return self

    def remove(self, placement_id: Hashable) -> "Substrate":
        """Free the cells of a registered placement and deregister it."""
        rect = self.placements.pop(placement_id, None)
        if rect is None:
            raise UnknownId(placement_id)
        self.cells[rect.t0:rect.t1, rect.f0:rect.f1] = False
        return self

    def edi(self) -> int:
        """
        Embedding Density Index: number of 4-neighbour cell pairs where exactly
        one cell is occupied. With ``border_occupied`` every free cell on the
        substrate edge also contributes one edge per border side it touches.
        """
        cells = self.cells
        if self.border_occupied:
            cells = np.pad(cells, 1, constant_values=True)
        return int(np.count_nonzero(cells[:, 1:] != cells[:, :-1])
                   + np.count_nonzero(cells[1:, :] != cells[:-1, :]))

    def edi_if_placed(self, rect: Rect, base_edi: Optional[int] = None) -> int:
        """
        EDI the substrate would have with ``rect`` occupied, without mutating it.

        Only the pairs crossing the rectangle boundary change: a neighbour that
        is free becomes a new edge, an occupied one stops being an edge.
        """
        self._check_placeable(rect)
        edi = self.edi() if base_edi is None else base_edi
        cells = self.cells
        border = self.border_occupied
        # (neighbour slice, length) for each side; None when the side is the substrate edge
        sides = (
            (cells[rect.t0 - 1, rect.f0:rect.f1] if rect.t0 > 0 else None, rect.f),
            (cells[rect.t1, rect.f0:rect.f1] if rect.t1 < self.T else None, rect.f),
            (cells[rect.t0:rect.t1, rect.f0 - 1] if rect.f0 > 0 else None, rect.t),
            (cells[rect.t0:rect.t1, rect.f1] if rect.f1 < self.F else None, rect.t),
        )
        for neighbours, length in sides:
            if neighbours is None:
                if border:
                    edi -= length
                continue
            occupied = int(np.count_nonzero(neighbours))
            edi += (length - occupied) - occupied
        return edi

    def maximal_free_rectangles(self) -> List[Rect]:
        """
        Every maximal all-free rectangle, ordered row-major by origin then width.

        For each bottom row a histogram of free run lengths is swept with a
        monotonic stack; a popped bar yields a rectangle that cannot grow
        left, right or up, and it is kept when it cannot grow down either.
        """
        rows = self.cells.tolist()
        F, T = self.F, self.T
        heights = [0] * F
        found: List[Rect] = []
        for bottom in range(T):
            row = rows[bottom]
            for col in range(F):
                heights[col] = 0 if row[col] else heights[col] + 1
            below = rows[bottom + 1] if bottom + 1 < T else None
            stack: List[int] = []
            for col in range(F + 1):
                h = heights[col] if col < F else 0
                while stack and heights[stack[-1]] >= h:
                    top_h = heights[stack.pop()]
                    if top_h == h:
                        continue
                    left = stack[-1] + 1 if stack else 0
                    if below is None or any(below[left:col]):
                        found.append(Rect(left, bottom - top_h + 1, col - left, top_h))
                stack.append(col)
        found.sort(key=lambda r: (r.t0, r.f0, r.f))
        return found

    def occupancy_split(self, owners: Mapping[Hashable, Tuple]) -> Tuple[Dict[Tuple, float], float]:
        """
        Fraction of the substrate held by each owner key, plus the total.

        Args:
            owners: placement id -> owner key, e.g. (operator, service)

        Returns:
            (fractions per owner key, total occupied fraction)
        """
        capacity = self.capacity
        cells_by_key: Dict[Tuple, int] = {}
        for placement_id, rect in self.placements.items():
            if placement_id not in owners:
                raise UnknownId(placement_id)
            key = owners[placement_id]
            cells_by_key[key] = cells_by_key.get(key, 0) + rect.area
        split = {key: count / capacity for key, count in cells_by_key.items()}
        return split, self.occupied_count / capacity

    def audit(self) -> None:
        """Re-derive the occupancy map from the registry; raise on any inconsistency."""
        expected = np.zeros_like(self.cells, dtype=np.int32)
        for placement_id, rect in self.placements.items():
            if not self.in_bounds(rect):
                raise OutOfBounds(f"placement {placement_id!r} at {tuple(rect)} is out of bounds")
            expected[rect.t0:rect.t1, rect.f0:rect.f1] += 1
        if (expected > 1).any():
            raise Overlap("two placements share a cell")
        if not np.array_equal(expected.astype(bool), self.cells):
            raise Overlap("occupancy map disagrees with the placement registry")
