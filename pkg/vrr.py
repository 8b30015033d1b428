"""
Virtual resource request (VRR) domain model: the request record, the rule
mapping a PRB count to rectangle shapes, and priority lookup per mode.
"""
from functools import lru_cache
from typing import List, Tuple

from pydantic import BaseModel, Field, model_validator

from errors import Infeasible
from models import Mode, PriorityPolicy, ServiceKind

Shape = Tuple[int, int]


@lru_cache(maxsize=4096)
def _shape_candidates(r: int, F: int, T: int) -> Tuple[Shape, ...]:
    # smallest height covering r for each width that fits
    best_area = min(f * -(-r // f) for f in range(1, F + 1) if -(-r // f) <= T)
    shapes = [(f, best_area // f) for f in range(1, F + 1)
              if best_area % f == 0 and best_area // f <= T]
    shapes.sort(key=lambda s: (abs(s[0] - s[1]), s[0]))
    return tuple(shapes)


def shape_candidates(r: int, F: int, T: int) -> List[Shape]:
    """
    All (f, t) rectangles of the smallest area A* >= r that fit an F x T substrate.

    Ordered most-square first (|f - t| ascending), then by width.

    Raises:
        Infeasible: if r exceeds F * T (or r < 1)
    """
    if r < 1 or r > F * T:
        raise Infeasible(f"cannot shape {r} PRBs on a {F}x{T} substrate")
    return list(_shape_candidates(r, F, T))


def priority_of(owner: str, service: ServiceKind, mode: Mode, policy: PriorityPolicy) -> int:
    """Priority level of an operator's service in the given mode (higher is served first)."""
    return policy.level(owner, service, mode)


class VRR(BaseModel):
    """
    A request for ``r`` contiguous PRBs during ``d`` rounds.

    ``waited`` counts the rounds the request has spent in the buffer; it is the
    only field that changes after creation. The priority is not stored: it
    follows from the operator, the service and the current mode.
    """
    id: int
    owner: str
    service: ServiceKind
    r: int = Field(ge=1)
    shapes: List[Shape]
    d: int = Field(ge=1)
    arrival_round: int = Field(ge=0)
    waited: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def check_shapes(self):
        if not self.shapes:
            raise ValueError("at least one shape is required")
        for f, t in self.shapes:
            if f < 1 or t < 1 or f * t < self.r:
                raise ValueError(f"shape {(f, t)} does not cover {self.r} PRBs")
        return self

    @property
    def area(self) -> int:
        """Allocated area A*: the smallest candidate rectangle."""
        return min(f * t for f, t in self.shapes)

    @property
    def mass(self) -> int:
        """Requested service mass r x d."""
        return self.r * self.d

    @property
    def flow(self) -> Tuple[str, ServiceKind]:
        return (self.owner, self.service)
