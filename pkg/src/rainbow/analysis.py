"""ROC/AUC estimation, Neyman-Pearson calibration and detector comparisons."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy import special

from .errors import CalibrationError, RainbowError
from .experiment import Scenario, ScoreTable, run_trials
from .seeding import derive_seed, make_rng

DEFAULT_BOOTSTRAP = 1000
MAX_DEGENERATE_FRACTION = 0.01


def _scores(x, what: str) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64).ravel()
    if a.size == 0:
        raise ValueError(f"{what} is empty")
    if np.isnan(a).any():
        raise ValueError(f"{what} contains NaN")
    return a


# --- ROC ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RocCurve:
    points: np.ndarray  # (k, 2) rows of (fpr, tpr), sorted by fpr
    auc: float
    n_h0: int
    n_h1: int

    @property
    def fpr(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def tpr(self) -> np.ndarray:
        return self.points[:, 1]


def auc_score(h0_scores, h1_scores) -> float:
    """Mann-Whitney AUC: P(h1 > h0) + P(h1 == h0) / 2."""
    h0 = np.sort(_scores(h0_scores, "h0_scores"))
    h1 = _scores(h1_scores, "h1_scores")
    below = np.searchsorted(h0, h1, side="left")
    upto = np.searchsorted(h0, h1, side="right")
    wins = 2 * below.sum() + (upto - below).sum()  # doubled to stay integral
    return float(wins) / (2.0 * h0.size * h1.size)


def roc(h0_scores, h1_scores) -> RocCurve:
    """ROC from sweeping a ``>=`` threshold over the pooled scores."""
    h0 = np.sort(_scores(h0_scores, "h0_scores"))
    h1 = np.sort(_scores(h1_scores, "h1_scores"))
    thresholds = np.unique(np.concatenate([h0, h1]))[::-1]
    fpr = (h0.size - np.searchsorted(h0, thresholds, side="left")) / h0.size
    tpr = (h1.size - np.searchsorted(h1, thresholds, side="left")) / h1.size
    points = np.column_stack([np.concatenate([[0.0], fpr]), np.concatenate([[0.0], tpr])])
    return RocCurve(points, auc_score(h0, h1), h0.size, h1.size)


def trapezoid_auc(curve: RocCurve) -> float:
    x, y = curve.fpr, curve.tpr
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


# --- thresholds and error rates ---------------------------------------------


def min_calibration_samples(target_fpr: float) -> int:
    return math.ceil(1.0 / target_fpr - 1e-9)


def calibrate_threshold(h0_scores, target_fpr: float) -> float:
    """Smallest null score ``s`` with ``P_h0(score >= s) <= target_fpr``.

    If ties at the top make every observed score too permissive, the next
    float above the maximum is returned (empirical FPR 0).
    """
    if not 0 < target_fpr < 1:
        raise ValueError("target_fpr must be in (0, 1)")
    h0 = np.sort(_scores(h0_scores, "h0_scores"))
    need = min_calibration_samples(target_fpr)
    if h0.size < need:
        raise CalibrationError(
            f"{h0.size} null scores cannot resolve FPR {target_fpr:g}; need at least {need}"
        )
    allowed = math.floor(target_fpr * h0.size + 1e-9)
    values = np.unique(h0)
    at_or_above = h0.size - np.searchsorted(h0, values, side="left")
    ok = np.nonzero(at_or_above <= allowed)[0]
    if ok.size == 0:
        return float(np.nextafter(h0[-1], np.inf))
    return float(values[ok[0]])


def empirical_rates(h0_scores, h1_scores, threshold: float) -> tuple[float, float]:
    """(false-positive rate, false-negative rate) under the ``>=`` decision rule."""
    h0 = np.asarray(h0_scores, dtype=np.float64)
    h1 = np.asarray(h1_scores, dtype=np.float64)
    return float(np.mean(h0 >= threshold)), float(np.mean(h1 < threshold))


@dataclass(frozen=True)
class ErrorRates:
    p_fa: float
    p_md: float
    threshold: float
    method: str  # "monte_carlo" or "gaussian_approx"


def q_function(z):
    """Standard normal upper tail, ``Q(z) = erfc(z / sqrt 2) / 2``.

    ``scipy.special.erfc`` (Cephes) holds about 1e-15 relative accuracy, so
    the tail stays accurate far beyond ``|z| = 8`` with no cancellation.
    """
    return 0.5 * special.erfc(np.asarray(z, dtype=np.float64) / math.sqrt(2.0))


def gaussian_error_approx(mu0, sigma0, mu1, sigma1, threshold) -> ErrorRates:
    if not (sigma0 > 0 and sigma1 > 0):
        raise ValueError("standard deviations must be positive")
    p_fa = float(q_function((threshold - mu0) / sigma0))
    p_md = float(q_function((mu1 - threshold) / sigma1))
    return ErrorRates(p_fa, p_md, float(threshold), "gaussian_approx")


def monte_carlo_error_rates(h0_scores, h1_scores, threshold) -> ErrorRates:
    p_fa, p_md = empirical_rates(h0_scores, h1_scores, threshold)
    return ErrorRates(p_fa, p_md, float(threshold), "monte_carlo")


# --- Monte Carlo summaries -------------------------------------------------


@dataclass(frozen=True)
class ScoreMoments:
    mu0: float
    sigma0: float
    mu1: float
    sigma1: float
    n_degenerate: int = 0

    def __iter__(self):
        return iter((self.mu0, self.sigma0, self.mu1, self.sigma1))


def _check_degenerate(table: ScoreTable, detector: str, n_total: int) -> None:
    bad = table.degenerate[detector]
    if bad > MAX_DEGENERATE_FRACTION * n_total:
        raise RainbowError(
            f"{detector}: {bad} of {n_total} trials hit degenerate input (> {MAX_DEGENERATE_FRACTION:.0%})"
        )


def moments_from_scores(h0, h1, n_degenerate: int = 0) -> ScoreMoments:
    # -inf marks degenerate trials; they are counted, not averaged
    h0 = np.asarray(h0)
    h1 = np.asarray(h1)
    h0, h1 = h0[h0 != -np.inf], h1[h1 != -np.inf]
    return ScoreMoments(
        float(np.mean(h0)), float(np.std(h0, ddof=1)), float(np.mean(h1)), float(np.std(h1, ddof=1)), n_degenerate
    )


def score_moments(
    detector: str, scenario: Scenario, n_trials: int, seed: int, workers: int = 1
) -> ScoreMoments:
    """Sample mean and standard deviation of a detector under H0 and H1."""
    if n_trials < 30:
        raise ValueError("n_trials must be >= 30")
    table = run_trials(scenario, [detector], n_trials, n_trials, seed, workers)
    _check_degenerate(table, detector, 2 * n_trials)
    return moments_from_scores(table.h0(detector), table.h1(detector), table.degenerate[detector])


# --- bootstrap comparison ----------------------------------------------------


class _ResampledAuc:
    """AUC of a bootstrap resample, given as multiplicity weights.

    With null multiplicities ``c0`` (in sorted-null order) and alternative
    multiplicities ``c1``, each alternative score wins ``C0[left]`` plus half
    of the tied mass, where ``C0`` is the cumulative sum of ``c0``.  This is
    exactly the Mann-Whitney statistic of the resampled multisets.
    """

    def __init__(self, h0, h1):
        order = np.argsort(h0, kind="stable")
        self.order = order
        s0 = np.asarray(h0)[order]
        self.left = np.searchsorted(s0, h1, side="left")
        self.right = np.searchsorted(s0, h1, side="right")
        self.n0, self.n1 = len(h0), len(h1)

    def __call__(self, c0, c1) -> float:
        cum = np.concatenate(([0], np.cumsum(c0[self.order])))
        doubled = 2 * cum[self.left] + (cum[self.right] - cum[self.left])
        return float(np.dot(c1, doubled)) / (2.0 * self.n0 * self.n1)


def bootstrap_aucs(table: ScoreTable, detectors: Sequence[str], n_boot: int, seed: int) -> np.ndarray:
    """``(n_boot, len(detectors))`` AUCs over paired resamples of the trials.

    Every detector sees the same resampled trial indices, so differences
    between columns are paired.
    """
    first = detectors[0]
    n0, n1 = table.h0(first).size, table.h1(first).size
    rng = make_rng(derive_seed(seed, 0, "bootstrap"))
    calcs = [_ResampledAuc(table.h0(d), table.h1(d)) for d in detectors]
    out = np.empty((n_boot, len(detectors)))
    for b in range(n_boot):
        c0 = np.bincount(rng.integers(0, n0, n0), minlength=n0)
        c1 = np.bincount(rng.integers(0, n1, n1), minlength=n1)
        for j, calc in enumerate(calcs):
            out[b, j] = calc(c0, c1)
    return out


def _ci(samples: np.ndarray, level: float = 0.95) -> tuple[float, float]:
    lo, hi = np.quantile(samples, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


@dataclass
class DetectorResult:
    detector: str
    auc: float
    auc_ci: tuple[float, float]
    roc: RocCurve
    moments: ScoreMoments
    target_fpr: float | None = None
    threshold: float | None = None
    achieved_fpr: float | None = None
    achieved_fnr: float | None = None
    n_degenerate: int = 0


@dataclass
class PairwiseDiff:
    first: str
    second: str
    diff: float  # AUC(first) - AUC(second)
    ci: tuple[float, float]


REPORT_COLUMNS = (
    "detector,scenario,n,a,jitter_scale,auc,auc_ci_lo,auc_ci_hi,"
    "fpr_target,threshold,achieved_fpr,achieved_fnr"
).split(",")


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x) + 0.0, ".10g")  # + 0.0 folds -0.0 into 0


@dataclass
class ComparisonReport:
    scenario: Scenario
    rows: list[DetectorResult]
    pairwise: list[PairwiseDiff]
    n_h0: int
    n_h1: int
    n_bootstrap: int
    table: ScoreTable = field(repr=False, default=None)
    boot: np.ndarray = field(repr=False, default=None)  # (n_bootstrap, n_detectors) AUCs

    def result(self, detector: str) -> DetectorResult:
        for r in self.rows:
            if r.detector == detector:
                return r
        raise KeyError(detector)

    def boot_auc(self, detector: str) -> np.ndarray:
        return self.boot[:, [r.detector for r in self.rows].index(detector)]

    def diff(self, first: str, second: str) -> PairwiseDiff:
        for p in self.pairwise:
            if (p.first, p.second) == (first, second):
                return p
            if (p.first, p.second) == (second, first):
                return PairwiseDiff(first, second, 0.0 - p.diff, (0.0 - p.ci[1], 0.0 - p.ci[0]))
        raise KeyError((first, second))

    def report_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        sc = self.scenario
        for r in self.rows:
            w.writerow(
                [
                    r.detector, sc.label, sc.n_packets, fmt(sc.amplitude), fmt(sc.jitter_scale),
                    fmt(r.auc), fmt(r.auc_ci[0]), fmt(r.auc_ci[1]), fmt(r.target_fpr),
                    fmt(r.threshold), fmt(r.achieved_fpr), fmt(r.achieved_fnr),
                ]
            )
        return buf.getvalue()

    def pairwise_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["first", "second", "scenario", "auc_diff", "ci_lo", "ci_hi"])
        for p in self.pairwise:
            w.writerow([p.first, p.second, self.scenario.label, fmt(p.diff), fmt(p.ci[0]), fmt(p.ci[1])])
        return buf.getvalue()

    def moments_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["detector", "scenario", "mu0", "sigma0", "mu1", "sigma1", "gauss_p_fa", "gauss_p_md", "degenerate"])
        for r in self.rows:
            m = r.moments
            p_fa = p_md = None
            if r.threshold is not None and m.sigma0 > 0 and m.sigma1 > 0 and np.isfinite([m.mu0, m.mu1]).all():
                est = gaussian_error_approx(m.mu0, m.sigma0, m.mu1, m.sigma1, r.threshold)
                p_fa, p_md = est.p_fa, est.p_md
            w.writerow([r.detector, self.scenario.label, fmt(m.mu0), fmt(m.sigma0), fmt(m.mu1), fmt(m.sigma1),
                        fmt(p_fa), fmt(p_md), r.n_degenerate])
        return buf.getvalue()


def roc_csv(curve: RocCurve) -> str:
    lines = ["fpr,tpr"]
    lines.extend(f"{fmt(f)},{fmt(t)}" for f, t in curve.points)
    return "\n".join(lines) + "\n"


def compare_detectors(
    scenario: Scenario,
    detectors: Sequence[str],
    n_trials: int,
    seed: int,
    *,
    n_h0_trials: int | None = None,
    target_fpr: float | None = 0.01,
    n_bootstrap: int = DEFAULT_BOOTSTRAP,
    workers: int = 1,
) -> ComparisonReport:
    """AUCs with bootstrap 95% CIs, calibrated operating points and paired AUC differences.

    ``n_bootstrap`` paired resamples (default 1000) give percentile intervals.
    """
    detectors = list(detectors)
    n_h0 = n_trials if n_h0_trials is None else n_h0_trials
    if target_fpr is not None and n_h0 < min_calibration_samples(target_fpr):
        raise CalibrationError(
            f"{n_h0} null trials cannot resolve FPR {target_fpr:g}; "
            f"need at least {min_calibration_samples(target_fpr)}"
        )
    table = run_trials(scenario, detectors, n_trials, n_h0, seed, workers)
    for d in detectors:
        _check_degenerate(table, d, n_trials + n_h0)

    boots = bootstrap_aucs(table, detectors, n_bootstrap, seed)
    rows = []
    for j, d in enumerate(detectors):
        h0, h1 = table.h0(d), table.h1(d)
        curve = roc(h0, h1)
        res = DetectorResult(
            d, curve.auc, _ci(boots[:, j]), curve,
            moments_from_scores(h0, h1, table.degenerate[d]), n_degenerate=table.degenerate[d],
        )
        if target_fpr is not None:
            thr = calibrate_threshold(h0, target_fpr)
            res.target_fpr = target_fpr
            res.threshold = thr
            res.achieved_fpr, res.achieved_fnr = empirical_rates(h0, h1, thr)
        rows.append(res)

    pairwise = []
    for i, j in combinations(range(len(detectors)), 2):
        diffs = boots[:, i] - boots[:, j]
        pairwise.append(
            PairwiseDiff(detectors[i], detectors[j], rows[i].auc - rows[j].auc, _ci(diffs))
        )
    return ComparisonReport(scenario, rows, pairwise, n_h0, n_trials, n_bootstrap, table, boots)
