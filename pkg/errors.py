"""
Exception hierarchy shared by the simulator modules and the CLI.
"""
from typing import Hashable


class HypervisorError(Exception):
    """Base class for all simulator errors."""


class GridError(HypervisorError):
    """Invalid operation on the resource substrate."""


class OutOfBounds(GridError):
    """A rectangle does not lie fully inside the substrate."""


class Overlap(GridError):
    """A rectangle covers at least one occupied resource block."""


class DuplicateId(GridError):
    """A placement id is already registered."""

    def __init__(self, placement_id: Hashable):
        super().__init__(f"placement {placement_id!r} is already registered")
        self.placement_id = placement_id


class UnknownId(GridError):
    """A placement id is not registered (or has no owner)."""

    def __init__(self, placement_id: Hashable):
        super().__init__(f"placement {placement_id!r} is not registered")
        self.placement_id = placement_id


class Infeasible(HypervisorError):
    """A request asks for more resource blocks than the substrate holds."""


class TooLarge(HypervisorError):
    """An instance exceeds the exhaustive oracle's search bounds."""


class ConfigInvalid(HypervisorError):
    """A scenario document could not be used."""


class ScenarioParseError(ConfigInvalid):
    """The scenario document is unreadable or not well-formed."""


class ScenarioValidationError(ConfigInvalid):
    """A scenario field violates the schema or a scenario invariant."""

    def __init__(self, field: str, reason: str):
        super().__init__(f"{field or '<root>'}: {reason}")
        self.field = field
        self.reason = reason
