"""Monte Carlo trial sampling for detector comparisons.

One trial produces the detector inputs for a single flow pair:

H1
    The incoming flow ``X`` is recorded and watermarked; the observation is
    ``X``'s own egress after the jitter channel.
H0
    ``X`` is recorded and watermarked as before, but the observation is the
    egress of a different flow ``Y``: an independent draw (model A), another
    draw around the shared base (model B), or another trace flow.  ``Y``
    carries no watermark.

Passive detectors always see unwatermarked traffic (under H1 the egress of
``X`` without the embedder); watermark detectors see the watermarked egress.
Both views share the same jitter realisation.

All randomness is drawn from :func:`rainbow.seeding.derive_seed` streams keyed
by ``(master_seed, trial_index, role)``, so results are independent of how
trials are chunked across worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .channel import JITTER_FAMILIES, JitterModel, apply_jitter
from .detect import get_detector, score
from .errors import ConfigError, DegenerateInputError, LengthMismatchError
from .flow import Flow, ipd
from .seeding import derive_seed, make_rng
from .traffic import DEVIATION_FAMILIES, ModelAParams, ModelBParams, gen_model_a, gen_model_b
from .watermark import DEFAULT_AMPLITUDE_WARN, WatermarkParams, WatermarkRecord, embed

MODELS = ("model_a", "model_b", "trace")
HYPOTHESES = ("h0", "h1")


@dataclass(frozen=True)
class Scenario:
    model: str = "model_a"
    rate: float = 10.0
    n_packets: int = 500
    amplitude: float = 0.005
    base_offset: float | None = None  # None: 10 * amplitude
    jitter_dist: str = "laplace"
    jitter_scale: float = 0.002
    deviation_sigma: float = 0.005
    deviation_dist: str = "laplace"
    flows: tuple = field(default=(), repr=False)
    name: str = ""
    amplitude_warn: float = DEFAULT_AMPLITUDE_WARN

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown scenario {self.model!r}; expected one of {MODELS}")
        if not self.rate > 0:
            raise ConfigError("rate must be positive")
        if self.n_packets < 3:
            raise ConfigError("n_packets must be >= 3")
        if not self.amplitude > 0:
            raise ConfigError("amplitude must be positive")
        if self.base_offset is not None and self.base_offset < 0:
            raise ConfigError("base_offset must be >= 0")
        if self.jitter_dist not in JITTER_FAMILIES:
            raise ConfigError(f"jitter_dist must be one of {JITTER_FAMILIES}")
        if not self.jitter_scale >= 0:
            raise ConfigError("jitter_scale must be >= 0")
        if not self.deviation_sigma >= 0:
            raise ConfigError("deviation_sigma must be >= 0")
        if self.deviation_dist not in DEVIATION_FAMILIES:
            raise ConfigError(f"deviation_dist must be one of {DEVIATION_FAMILIES}")
        if self.model == "trace" and len(self.flows) < 2:
            raise ConfigError("trace scenario needs at least 2 flows")

    @property
    def label(self) -> str:
        return self.name or self.model

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)


@dataclass
class Trial:
    record: WatermarkRecord
    observed_plain: np.ndarray
    observed_marked: np.ndarray


def scenario_base(scenario: Scenario, master_seed: int) -> Flow | None:
    """The shared model-B timing pattern: a single model-A draw per experiment."""
    if scenario.model != "model_b":
        return None
    seed = derive_seed(master_seed, 0, "model_b/base")
    return gen_model_a(ModelAParams(scenario.rate, scenario.n_packets, seed), "base")


def _draw_flow(scenario: Scenario, base: Flow | None, seed: int, flow_id: str) -> Flow:
    if scenario.model == "model_a":
        return gen_model_a(ModelAParams(scenario.rate, scenario.n_packets, seed), flow_id)
    params = ModelBParams(base, scenario.deviation_sigma, scenario.deviation_dist, seed)
    return gen_model_b(params, flow_id)


def sample_trial(
    scenario: Scenario, master_seed: int, index: int, hypothesis: str, base: Flow | None = None
) -> Trial:
    if hypothesis not in HYPOTHESES:
        raise ValueError(f"hypothesis must be one of {HYPOTHESES}")
    if scenario.model == "model_b" and base is None:
        base = scenario_base(scenario, master_seed)

    def seed(role):
        return derive_seed(master_seed, index, f"{hypothesis}/{role}")

    if scenario.model == "trace":
        flows = scenario.flows
        x = flows[index % len(flows)]
    else:
        x = _draw_flow(scenario, base, seed("incoming"), f"x{index}")

    n_ipds = len(x) - 1
    params = WatermarkParams(seed("key"), n_ipds, scenario.amplitude, scenario.amplitude_warn)
    marked_flow, record = embed(x, params, scenario.base_offset)
    jitter = JitterModel(scenario.jitter_dist, scenario.jitter_scale, seed("jitter"))

    if hypothesis == "h1":
        plain = apply_jitter(ipd(x), jitter)
        marked = apply_jitter(ipd(marked_flow), jitter)
        return Trial(record, plain, marked)

    if scenario.model == "trace":
        flows = scenario.flows
        shift = 1 + int(make_rng(seed("other")).integers(len(flows) - 1))
        y = flows[(index + shift) % len(flows)]
    else:
        y = _draw_flow(scenario, base, seed("other"), f"y{index}")
    observed = apply_jitter(ipd(y), jitter)
    return Trial(record, observed, observed)


def score_trial(trial: Trial, detector: str, scenario: Scenario) -> float:
    spec = get_detector(detector)
    jitter = JitterModel(scenario.jitter_dist, scenario.jitter_scale)
    if spec.watermark:
        return score(detector, trial.record, trial.observed_marked, rate=scenario.rate, jitter=jitter).value
    return score(detector, trial.record, trial.observed_plain, rate=scenario.rate, jitter=jitter).value


@dataclass
class ScoreTable:
    """Scores per detector and hypothesis, ordered by trial index.

    Degenerate trials (detector raised on degenerate input) score ``-inf``
    and are counted per detector.
    """

    scores: dict  # detector -> {"h0": ndarray, "h1": ndarray}
    degenerate: dict  # detector -> int

    def h0(self, detector: str) -> np.ndarray:
        return self.scores[detector]["h0"]

    def h1(self, detector: str) -> np.ndarray:
        return self.scores[detector]["h1"]


def _score_chunk(scenario, detectors, master_seed, hypothesis, indices, base):
    out = np.empty((len(detectors), len(indices)))
    bad = np.zeros((len(detectors), len(indices)), dtype=bool)
    for col, index in enumerate(indices):
        trial = sample_trial(scenario, master_seed, index, hypothesis, base)
        for row, det in enumerate(detectors):
            try:
                out[row, col] = score_trial(trial, det, scenario)
            except (DegenerateInputError, LengthMismatchError):
                out[row, col] = -math.inf
                bad[row, col] = True
    return out, bad


def _chunks(n: int, k: int) -> list[range]:
    size = max(1, math.ceil(n / k))
    return [range(i, min(n, i + size)) for i in range(0, n, size)]


def run_trials(
    scenario: Scenario,
    detectors: Sequence[str],
    n_h1: int,
    n_h0: int | None = None,
    master_seed: int = 0,
    workers: int = 1,
) -> ScoreTable:
    """Score every detector on ``n_h1`` H1 trials and ``n_h0`` H0 trials."""
    detectors = list(detectors)
    if not detectors:
        raise ConfigError("empty detector list")
    for d in detectors:
        get_detector(d)
    n_h0 = n_h1 if n_h0 is None else n_h0
    base = scenario_base(scenario, master_seed)

    jobs = []
    for hyp, n in (("h0", n_h0), ("h1", n_h1)):
        for chunk in _chunks(n, max(1, workers) * 4):
            jobs.append((hyp, chunk))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_score_chunk, scenario, detectors, master_seed, hyp, list(ch), base)
                for hyp, ch in jobs
            ]
            results = [f.result() for f in futures]
    else:
        results = [_score_chunk(scenario, detectors, master_seed, hyp, list(ch), base) for hyp, ch in jobs]

    parts = {"h0": [], "h1": []}
    flags = {"h0": [], "h1": []}
    for (hyp, _), (vals, bad) in zip(jobs, results):
        parts[hyp].append(vals)
        flags[hyp].append(bad)
    scores, degenerate = {}, {}
    for row, det in enumerate(detectors):
        scores[det] = {}
        degenerate[det] = 0
        for hyp in HYPOTHESES:
            if parts[hyp]:
                scores[det][hyp] = np.concatenate([p[row] for p in parts[hyp]])
                degenerate[det] += int(sum(f[row].sum() for f in flags[hyp]))
            else:
                scores[det][hyp] = np.empty(0)
    return ScoreTable(scores, degenerate)
