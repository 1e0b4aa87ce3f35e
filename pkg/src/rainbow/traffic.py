"""Synthetic flows for the two extreme traffic models.

Model A: independent Poisson flows (i.i.d. exponential IPDs).
Model B: every flow follows a shared base timing pattern, perturbed by a
small per-IPD deviation so that unrelated flows stay distinguishable in
principle; ``deviation_sigma = 0`` gives identical flows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import sample_noise
from .flow import Flow, ipd, reconstruct
from .seeding import make_rng

DEVIATION_FAMILIES = ("laplace", "gaussian")


@dataclass(frozen=True)
class ModelAParams:
    rate: float = 10.0  # packets per second
    n_packets: int = 500
    seed: int = 0
    start: float = 0.0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        if self.n_packets < 2:
            raise ValueError("n_packets must be >= 2")


@dataclass(frozen=True)
class ModelBParams:
    base: Flow
    deviation_sigma: float = 0.005
    deviation_dist: str = "laplace"
    seed: int = 0

    def __post_init__(self):
        if not self.deviation_sigma >= 0:
            raise ValueError("deviation_sigma must be >= 0")
        if self.deviation_dist not in DEVIATION_FAMILIES:
            raise ValueError(f"deviation_dist must be one of {DEVIATION_FAMILIES}")


def gen_model_a(params: ModelAParams, flow_id: str = "") -> Flow:
    rng = make_rng(params.seed)
    gaps = rng.exponential(1.0 / params.rate, params.n_packets - 1)
    return reconstruct(params.start, gaps, flow_id)


def gen_model_b(params: ModelBParams, flow_id: str = "") -> Flow:
    base_ipds = ipd(params.base)
    rng = make_rng(params.seed)
    dev = sample_noise(rng, params.deviation_dist, params.deviation_sigma, base_ipds.size)
    return reconstruct(params.base.origin, np.maximum(0.0, base_ipds + dev), flow_id)
