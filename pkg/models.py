#!/usr/bin/env python3
"""
Shared data models for the hypervisor simulator using Pydantic.

This module provides the type-validated scenario schema (the contents of a
``.scenario`` document) and the enumerations used throughout the simulator.
Defaults describe the reference setup: a 20x20 substrate, 1000 rounds, an
emergency between rounds 300 and 700, one Public-Safety and one commercial
operator.
"""

from enum import Enum
from typing import Any, Dict, List, Literal, Tuple

from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, ValidationError, model_validator

from errors import ScenarioValidationError

SCHEMA_VERSION = 1


class ServiceKind(str, Enum):
    """Service classes offered by every virtual operator."""
    VOICE = "voice"
    VIDEO = "video"
    MSG = "msg"


class Mode(str, Enum):
    """Hypervisor operating mode."""
    NORMAL = "normal"
    EMERGENCY = "emergency"


class Algorithm(str, Enum):
    """Embedding engine identifiers (CLI ``--algorithm``)."""
    STATIC = "static"
    DYNAMIC = "dynamic"
    ORACLE = "oracle"


# (operator name, service) identifies one traffic flow
FlowKey = Tuple[str, ServiceKind]

SERVICE_ORDER: Tuple[ServiceKind, ...] = (ServiceKind.VOICE, ServiceKind.VIDEO, ServiceKind.MSG)


class _Document(BaseModel):
    """Base for scenario sections: immutable, unknown keys rejected."""
    model_config = ConfigDict(extra="forbid", frozen=True)


class SubstrateSpec(_Document):
    """Frequency x time dimensions of the PRB grid."""
    F: int = Field(default=20, ge=1)
    T: int = Field(default=20, ge=1)


class EmergencyWindow(_Document):
    """Rounds [start, end) run in emergency mode."""
    start: int = Field(default=300, ge=0)
    end: int = Field(default=700, ge=0)


class ServiceSpec(_Document):
    """Traffic model of one service class."""
    kind: ServiceKind
    mean_duration: float = Field(ge=1)
    size_min: int = Field(ge=1)
    size_max: int = Field(ge=1)
    max_delay: int = Field(ge=1)

    @model_validator(mode="after")
    def check_size_range(self):
        if self.size_min > self.size_max:
            raise ValueError(f"size_min {self.size_min} exceeds size_max {self.size_max}")
        return self


class RateTable(_Document):
    """Poisson arrival rates (requests per round) of one operator, per mode and service."""
    normal: Dict[ServiceKind, NonNegativeFloat]
    emergency: Dict[ServiceKind, NonNegativeFloat]

    def rate(self, service: ServiceKind, mode: Mode) -> float:
        table = self.normal if mode == Mode.NORMAL else self.emergency
        return table[service]


class OperatorSpec(_Document):
    """A virtual operator sharing the substrate."""
    name: str = Field(min_length=1)
    is_ps: bool = False
    rates: RateTable


class PriorityPolicy(_Document):
    """
    Integer priority levels per mode, operator and service (higher = served first).

    Only the relative order of the levels matters to the embedding engines.
    """
    normal: Dict[str, Dict[ServiceKind, int]]
    emergency: Dict[str, Dict[ServiceKind, int]]

    def level(self, owner: str, service: ServiceKind, mode: Mode) -> int:
        table = self.normal if mode == Mode.NORMAL else self.emergency
        return table[owner][service]


class SimulationOptions(_Document):
    """Sensitivity switches; defaults are the documented behaviour."""
    edi_border_occupied: bool = False
    fixed_duration: bool = False
    arrivals_eligible_same_round: bool = True


def default_services() -> List[ServiceSpec]:
    """Voice, video and messaging with their default traffic models."""
    return [
        ServiceSpec(kind=ServiceKind.VOICE, mean_duration=30, size_min=1, size_max=2, max_delay=1),
        ServiceSpec(kind=ServiceKind.VIDEO, mean_duration=10, size_min=8, size_max=25, max_delay=2),
        ServiceSpec(kind=ServiceKind.MSG, mean_duration=3, size_min=1, size_max=8, max_delay=4),
    ]


def default_operators() -> List[OperatorSpec]:
    """
    The PS and commercial operators with their normal rates and emergency rates.

    During an emergency PS rates are multiplied by 5, commercial voice and
    messaging by 2.5, commercial video stays constant.
    """
    return [
        OperatorSpec(
            name="PS",
            is_ps=True,
            rates=RateTable(
                normal={ServiceKind.VOICE: 0.14, ServiceKind.VIDEO: 0.14, ServiceKind.MSG: 0.3},
                emergency={ServiceKind.VOICE: 0.7, ServiceKind.VIDEO: 0.7, ServiceKind.MSG: 1.5},
            ),
        ),
        OperatorSpec(
            name="Commercial",
            is_ps=False,
            rates=RateTable(
                normal={ServiceKind.VOICE: 1.4, ServiceKind.VIDEO: 1.4, ServiceKind.MSG: 3.0},
                emergency={ServiceKind.VOICE: 3.5, ServiceKind.VIDEO: 1.4, ServiceKind.MSG: 7.5},
            ),
        ),
    ]


def default_policy() -> PriorityPolicy:
    """Service-only ranking in normal mode; PS above everything commercial in emergency mode."""
    normal = {ServiceKind.VOICE: 3, ServiceKind.VIDEO: 2, ServiceKind.MSG: 1}
    return PriorityPolicy(
        normal={"PS": dict(normal), "Commercial": dict(normal)},
        emergency={
            "PS": {ServiceKind.VOICE: 6, ServiceKind.VIDEO: 5, ServiceKind.MSG: 4},
            "Commercial": {ServiceKind.VOICE: 3, ServiceKind.VIDEO: 1, ServiceKind.MSG: 2},
        },
    )


class Scenario(_Document):
    """
    Full experiment description, identical in shape to the scenario file.

    Validation raises :class:`errors.ScenarioValidationError` carrying the
    dotted path of the offending field.
    """
    schema_version: Literal[1] = SCHEMA_VERSION
    substrate: SubstrateSpec = Field(default_factory=SubstrateSpec)
    horizon: int = Field(default=1000, ge=0)
    emergency: EmergencyWindow = Field(default_factory=EmergencyWindow)
    services: List[ServiceSpec] = Field(default_factory=default_services)
    operators: List[OperatorSpec] = Field(default_factory=default_operators)
    policy: PriorityPolicy = Field(default_factory=default_policy)
    algorithm: Algorithm = Algorithm.DYNAMIC
    smoothing_window: int = Field(default=25, ge=1)
    options: SimulationOptions = Field(default_factory=SimulationOptions)

    @model_validator(mode="after")
    def check_invariants(self):
        if self.emergency.start > self.emergency.end:
            raise ScenarioValidationError("emergency.start", "must not exceed emergency.end")
        if self.emergency.end > self.horizon:
            raise ScenarioValidationError("emergency.end", f"must not exceed horizon {self.horizon}")

        capacity = self.substrate.F * self.substrate.T
        kinds = [s.kind for s in self.services]
        if not kinds:
            raise ScenarioValidationError("services", "at least one service is required")
        for idx, spec in enumerate(self.services):
            if kinds.count(spec.kind) > 1:
                raise ScenarioValidationError(f"services.{idx}.kind", f"service {spec.kind.value} declared twice")
            if spec.size_max > capacity:
                raise ScenarioValidationError(f"services.{idx}.size_max", f"exceeds substrate capacity {capacity}")

        names = [op.name for op in self.operators]
        for idx, op in enumerate(self.operators):
            if names.count(op.name) > 1:
                raise ScenarioValidationError(f"operators.{idx}.name", f"operator {op.name!r} declared twice")
            for mode in Mode:
                table = op.rates.normal if mode == Mode.NORMAL else op.rates.emergency
                for kind in kinds:
                    if kind not in table:
                        raise ScenarioValidationError(
                            f"operators.{idx}.rates.{mode.value}.{kind.value}", "missing rate for declared service")
                for kind in table:
                    if kind not in kinds:
                        raise ScenarioValidationError(
                            f"operators.{idx}.rates.{mode.value}.{kind.value}", "rate given for undeclared service")
        if not any(op.is_ps for op in self.operators):
            raise ScenarioValidationError("operators", "at least one PS operator is required")
        if all(op.is_ps for op in self.operators):
            raise ScenarioValidationError("operators", "at least one commercial operator is required")

        self._check_policy(kinds)
        return self

    def _check_policy(self, kinds: List[ServiceKind]) -> None:
        for mode in Mode:
            table = self.policy.normal if mode == Mode.NORMAL else self.policy.emergency
            for op in self.operators:
                if op.name not in table:
                    raise ScenarioValidationError(f"policy.{mode.value}.{op.name}", "missing priority levels")
                for kind in kinds:
                    if kind not in table[op.name]:
                        raise ScenarioValidationError(
                            f"policy.{mode.value}.{op.name}.{kind.value}", "missing priority level")
            for name in table:
                if name not in self.operator_names:
                    raise ScenarioValidationError(f"policy.{mode.value}.{name}", "unknown operator")

        # normal mode: operators are interchangeable per service
        for kind in kinds:
            levels = {self.policy.normal[op.name][kind] for op in self.operators}
            if len(levels) > 1:
                raise ScenarioValidationError(
                    f"policy.normal", f"operators must share one level for {kind.value}")

        # emergency mode: every PS level above every commercial level
        ps_min = min(self.policy.emergency[op.name][k] for op in self.operators if op.is_ps for k in kinds)
        other_max = max(self.policy.emergency[op.name][k] for op in self.operators if not op.is_ps for k in kinds)
        if ps_min <= other_max:
            raise ScenarioValidationError("policy.emergency", "every PS level must exceed every commercial level")

    @property
    def F(self) -> int:
        return self.substrate.F

    @property
    def T(self) -> int:
        return self.substrate.T

    @property
    def capacity(self) -> int:
        return self.substrate.F * self.substrate.T

    @property
    def emergency_start(self) -> int:
        return self.emergency.start

    @property
    def emergency_end(self) -> int:
        return self.emergency.end

    @property
    def service_specs(self) -> Dict[ServiceKind, ServiceSpec]:
        return {spec.kind: spec for spec in self.services}

    @property
    def operator_names(self) -> List[str]:
        return [op.name for op in self.operators]

    def operator(self, name: str) -> OperatorSpec:
        for op in self.operators:
            if op.name == name:
                return op
        raise KeyError(name)

    @property
    def flows(self) -> List[FlowKey]:
        """All (operator, service) flows: PS operators first, then voice, video, msg."""
        ordered_ops = [op for op in self.operators if op.is_ps] + [op for op in self.operators if not op.is_ps]
        declared = set(self.service_specs)
        return [(op.name, kind) for op in ordered_ops for kind in SERVICE_ORDER if kind in declared]

    def rate(self, owner: str, service: ServiceKind, mode: Mode) -> float:
        return self.operator(owner).rates.rate(service, mode)


def scenario_document(scenario: Scenario) -> Dict:
    """Serialize a scenario to the JSON-compatible document stored in ``.scenario`` files."""
    return scenario.model_dump(mode="json")


def parse_scenario(document: Any) -> Scenario:
    """
    Validate a decoded scenario document.

    Raises:
        ScenarioValidationError: with the dotted path of the first offending field
    """
    if not isinstance(document, dict):
        raise ScenarioValidationError("", "scenario document must be a JSON object")
    if "schema_version" not in document:
        raise ScenarioValidationError("schema_version", "field required")
    try:
        return Scenario.model_validate(document)
    except ValidationError as exc:
        error = exc.errors()[0]
        field = ".".join(str(part) for part in error["loc"])
        raise ScenarioValidationError(field, error["msg"]) from exc
