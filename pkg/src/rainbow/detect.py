"""Passive and non-blind watermark detectors.

Correlation detectors return a Pearson coefficient in ``[-1, 1]``; the
likelihood-ratio detectors return an unbounded log-likelihood ratio, with
``+inf`` as a legal sentinel.  Every detector aligns its inputs to their
common prefix before scoring.

==================  ==========  ==================================================
name                kind        statistic
==================  ==========  ==================================================
``PassiveCorr``     passive     corr(incoming IPDs, observed IPDs)
``PassiveLRT-A``    passive     sum log f_jitter(out - in) - log f_Exp(rate)(out)
``SLCorr``          watermark   corr(observed - recorded, chips)
``NonblindLRT-A``   watermark   sum log f_jitter(d - w) - log f_Laplace(1/rate)(d)
==================  ==========  ==================================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channel import JitterModel, h0_difference_density
from .errors import DegenerateInputError, LengthMismatchError
from .flow import truncate_pair
from .watermark import WatermarkRecord

# Residuals below this are treated as an exact match when the channel has no
# jitter; timestamps carry nanosecond resolution.
EXACT_MATCH_ATOL = 1e-10


@dataclass(frozen=True)
class DetectionScore:
    value: float
    detector_name: str
    n_used: int


@dataclass(frozen=True)
class Decision:
    linked: bool
    score: DetectionScore
    threshold: float


def decide(score: DetectionScore, threshold: float) -> Decision:
    return Decision(bool(score.value >= threshold), score, float(threshold))


def normalized_correlation(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatchError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise DegenerateInputError("correlation needs at least 2 samples")
    xc = x - x.mean()
    yc = y - y.mean()
    # rescale by the largest deviation first so tiny spreads do not underflow
    mx, my = np.abs(xc).max(), np.abs(yc).max()
    if mx == 0 or my == 0:
        raise DegenerateInputError("zero-variance input to correlation")
    xc, yc = xc / mx, yc / my
    r = float(np.dot(xc, yc) / (np.linalg.norm(xc) * np.linalg.norm(yc)))
    return min(1.0, max(-1.0, r))


def log_likelihood_ratio(h1_logpdf, h0_logpdf) -> float:
    """``sum(h1 - h0)`` of per-sample log-densities; swapping arguments negates it exactly."""
    return float(np.sum(np.asarray(h1_logpdf) - np.asarray(h0_logpdf)))


def exponential_logpdf(x, rate: float):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, math.log(rate) - rate * x, -np.inf)


def _noiseless_or_raise(residual: np.ndarray, name: str, n: int) -> DetectionScore:
    if np.all(np.abs(residual) <= EXACT_MATCH_ATOL):
        return DetectionScore(math.inf, name, n)
    raise DegenerateInputError(f"{name}: zero jitter scale with non-matching flows")


def detect_passive(in_ipds, out_ipds) -> DetectionScore:
    a, b = truncate_pair(in_ipds, out_ipds)
    return DetectionScore(normalized_correlation(a, b), "PassiveCorr", a.size)


def detect_passive_lrt_a(in_ipds, out_ipds, rate: float, jitter: JitterModel) -> DetectionScore:
    """H1: ``out = in + jitter``; H0: ``out`` is an independent Poisson(rate) flow."""
    if not rate > 0:
        raise ValueError("rate must be positive")
    a, b = truncate_pair(in_ipds, out_ipds)
    name = "PassiveLRT-A"
    if jitter.scale == 0:
        return _noiseless_or_raise(b - a, name, a.size)
    value = log_likelihood_ratio(jitter.density().logpdf(b - a), exponential_logpdf(b, rate))
    return DetectionScore(value, name, a.size)


def _difference_signal(record: WatermarkRecord, observed) -> tuple[np.ndarray, np.ndarray]:
    rec, obs = truncate_pair(record.recorded_ipds, observed)
    n = min(rec.size, len(record.watermark))
    return obs[:n] - rec[:n], record.watermark.values[:n]


def detect_slcorr(record: WatermarkRecord, observed) -> DetectionScore:
    """Subtract the recorded IPDs, then linearly correlate with the chips."""
    d, w = _difference_signal(record, observed)
    return DetectionScore(normalized_correlation(d, w), "SLCorr", d.size)


def detect_nonblind_lrt_a(
    record: WatermarkRecord, observed, rate: float, jitter: JitterModel
) -> DetectionScore:
    """H1: ``d = w + jitter``; H0: ``d`` is the difference of two independent Exp(rate) IPDs."""
    if not rate > 0:
        raise ValueError("rate must be positive")
    d, w = _difference_signal(record, observed)
    name = "NonblindLRT-A"
    if jitter.scale == 0:
        return _noiseless_or_raise(d - w, name, d.size)
    value = log_likelihood_ratio(
        jitter.density().logpdf(d - w), h0_difference_density(rate).logpdf(d)
    )
    return DetectionScore(value, name, d.size)


# --- registry ---------------------------------------------------------------


@dataclass(frozen=True)
class DetectorSpec:
    name: str
    watermark: bool  # needs the chips / a watermarked observation
    needs_model: bool  # needs rate and jitter parameters
    fn: Callable


DETECTORS: dict[str, DetectorSpec] = {
    "PassiveCorr": DetectorSpec("PassiveCorr", False, False, detect_passive),
    "PassiveLRT-A": DetectorSpec("PassiveLRT-A", False, True, detect_passive_lrt_a),
    "SLCorr": DetectorSpec("SLCorr", True, False, detect_slcorr),
    "NonblindLRT-A": DetectorSpec("NonblindLRT-A", True, True, detect_nonblind_lrt_a),
}


def get_detector(name: str) -> DetectorSpec:
    try:
        return DETECTORS[name]
    except KeyError:
        raise KeyError(f"unknown detector {name!r}; known: {', '.join(DETECTORS)}") from None


def score(name: str, reference, observed, *, rate: float = 10.0, jitter: JitterModel | None = None):
    """Score ``observed`` against ``reference`` with the named detector.

    ``reference`` is a :class:`WatermarkRecord` or, for passive detectors, a
    bare IPD vector.
    """
    spec = get_detector(name)
    if spec.watermark:
        if not isinstance(reference, WatermarkRecord):
            raise TypeError(f"{name} needs a WatermarkRecord")
        args = (reference, observed)
    else:
        ref = reference.recorded_ipds if isinstance(reference, WatermarkRecord) else reference
        args = (ref, observed)
    if spec.needs_model:
        return spec.fn(*args, rate, jitter if jitter is not None else JitterModel())
    return spec.fn(*args)
