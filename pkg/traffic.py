"""
Stochastic workload generation: Poisson arrivals per (operator, service),
uniform request sizes and exponential lifetimes, with mode-dependent rates.
"""
import itertools
import logging
import math
import zlib
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from models import Mode, Scenario, ServiceKind, ServiceSpec
from vrr import VRR, shape_candidates

logger = logging.getLogger(__name__)

PURPOSES = ("arrivals", "size", "duration")


class Rng:
    """
    Seeded source of independent named random streams.

    Each (operator, service, purpose) gets its own numpy Generator derived
    from the scenario seed and a checksum of the stream name, so changing the
    traffic of one flow never shifts the draws of another.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: Dict[Tuple[str, str, str], np.random.Generator] = {}

    def stream(self, owner: str, service: ServiceKind, purpose: str) -> np.random.Generator:
        key = (owner, ServiceKind(service).value, purpose)
        generator = self._streams.get(key)
        if generator is None:
            name = "/".join(key).encode("utf-8")
            generator = np.random.default_rng([self.seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name)])
            self._streams[key] = generator
        return generator


def arrivals(rate: float, rng: np.random.Generator) -> int:
    """Number of requests arriving in one round: Poisson with mean ``rate``."""
    if rate < 0:
        raise ValueError(f"arrival rate must be non-negative, got {rate}")
    if rate == 0:
        return 0
    return int(rng.poisson(rate))


def exponential_scale(mean_duration: float) -> float:
    """
    Scale of the exponential lifetime whose rounded-up value has mean ``mean_duration``.

    ceil(Exp(scale)) is geometric with success probability 1 - exp(-1/scale);
    solving for a mean of mu gives scale = -1 / ln(1 - 1/mu). Taking scale = mu
    literally would give ceil(Exp(mean=mu)) a mean of about mu + 0.5.
    """
    if mean_duration <= 1:
        return 0.0
    return -1.0 / math.log1p(-1.0 / mean_duration)


def sample_duration(spec: ServiceSpec, rng: np.random.Generator, fixed_duration: bool = False) -> int:
    if fixed_duration:
        return max(1, int(round(spec.mean_duration)))
    scale = exponential_scale(spec.mean_duration)
    if scale == 0.0:
        return 1
    return max(1, math.ceil(rng.exponential(scale)))


def sample_vrr(owner: str, spec: ServiceSpec, round_index: int, rng: Rng, dims: Tuple[int, int],
               vrr_id: int, fixed_duration: bool = False) -> VRR:
    """
    Draw one request of the given service.

    Args:
        owner: operator name
        spec: service traffic model
        round_index: arrival round
        rng: stream source
        dims: (F, T) of the substrate, bounding the shape candidates
        vrr_id: identifier to assign
        fixed_duration: use the mean duration instead of an exponential draw

    Returns:
        VRR with r ~ U{size_min..size_max}, d >= 1 and waited = 0
    """
    r = int(rng.stream(owner, spec.kind, "size").integers(spec.size_min, spec.size_max + 1))
    d = sample_duration(spec, rng.stream(owner, spec.kind, "duration"), fixed_duration)
    F, T = dims
    return VRR(
        id=vrr_id,
        owner=owner,
        service=spec.kind,
        r=r,
        shapes=shape_candidates(r, F, T),
        d=d,
        arrival_round=round_index,
    )


def generate_round(scenario: Scenario, round_index: int, mode: Mode, rng: Rng,
                   ids: Optional[Iterator[int]] = None) -> List[VRR]:
    """
    All requests arriving in one round, PS operators first, then voice, video, msg.

    Args:
        scenario: rates and service models
        round_index: current round
        mode: selects normal or emergency rates
        rng: stream source
        ids: id source shared across rounds (a fresh counter when omitted)
    """
    ids = itertools.count() if ids is None else ids
    specs = scenario.service_specs
    dims = (scenario.F, scenario.T)
    fixed = scenario.options.fixed_duration
    batch: List[VRR] = []
    for owner, kind in scenario.flows:
        count = arrivals(scenario.rate(owner, kind, mode), rng.stream(owner, kind, "arrivals"))
        for _ in range(count):
            batch.append(sample_vrr(owner, specs[kind], round_index, rng, dims, next(ids), fixed))
    return batch
