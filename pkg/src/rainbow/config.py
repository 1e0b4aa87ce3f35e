"""Experiment configuration files.

A flat ``key = value`` text file; ``#`` starts a comment.  Unknown keys are
errors.  Keys and defaults:

=================  =======  ==============================================
key                type     default
=================  =======  ==============================================
scenario           str      model_a  (model_a | model_b | trace)
rate               float    10.0     packets/s of model-A flows
n_packets          int      500
amplitude          float    0.005    watermark chip amplitude, seconds
amplitude_warn     float    0.010    invisibility budget warning threshold
base_offset        float    auto     embedder queue offset (auto = 10 * amplitude)
jitter_dist        str      laplace  (laplace | gaussian | uniform)
jitter_scale       float    0.002
deviation_sigma    float    0.005    model-B per-IPD deviation scale
deviation_dist     str      laplace  (laplace | gaussian)
trace_path         str      (empty)  flow file for scenario = trace
detectors          list     PassiveCorr,PassiveLRT-A,SLCorr,NonblindLRT-A
n_trials           int      2000     trials per hypothesis
n_h0_trials        int      auto     null trials (auto = n_trials)
target_fpr         float    0.01
bootstrap          int      1000     bootstrap resamples for AUC intervals
master_seed        int      required
out_dir            str      results
workers            int      1
=================  =======  ==============================================
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .detect import DETECTORS
from .errors import ConfigError
from .experiment import Scenario
from .flow import load_flows


def _detector_list(text: str) -> tuple:
    return tuple(d.strip() for d in text.split(",") if d.strip())


def _optional(conv):
    def parse(text):
        return None if text.strip().lower() in ("auto", "none", "") else conv(text)

    return parse


def _seed(text):
    value = int(text)
    if value < 0:
        raise ValueError("seeds are non-negative")
    return value


_PARSERS = {
    "scenario": str,
    "rate": float,
    "n_packets": int,
    "amplitude": float,
    "amplitude_warn": float,
    "base_offset": _optional(float),
    "jitter_dist": str,
    "jitter_scale": float,
    "deviation_sigma": float,
    "deviation_dist": str,
    "trace_path": str,
    "detectors": _detector_list,
    "n_trials": int,
    "n_h0_trials": _optional(int),
    "target_fpr": float,
    "bootstrap": int,
    "master_seed": _optional(_seed),
    "out_dir": str,
    "workers": int,
}


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "model_a"
    rate: float = 10.0
    n_packets: int = 500
    amplitude: float = 0.005
    amplitude_warn: float = 0.010
    base_offset: float | None = None
    jitter_dist: str = "laplace"
    jitter_scale: float = 0.002
    deviation_sigma: float = 0.005
    deviation_dist: str = "laplace"
    trace_path: str = ""
    detectors: tuple = ("PassiveCorr", "PassiveLRT-A", "SLCorr", "NonblindLRT-A")
    n_trials: int = 2000
    n_h0_trials: int | None = None
    target_fpr: float = 0.01
    bootstrap: int = 1000
    master_seed: int | None = None
    out_dir: str = "results"
    workers: int = 1

    @property
    def null_trials(self) -> int:
        return self.n_trials if self.n_h0_trials is None else self.n_h0_trials

    def validate(self) -> "ExperimentConfig":
        from .analysis import min_calibration_samples

        if self.master_seed is None:
            raise ConfigError("master_seed is required")
        if not self.detectors:
            raise ConfigError("detector list is empty")
        for d in self.detectors:
            if d not in DETECTORS:
                raise ConfigError(f"unknown detector {d!r}; known: {', '.join(DETECTORS)}")
        if self.n_trials < 30 or self.null_trials < 30:
            raise ConfigError("n_trials and n_h0_trials must be >= 30")
        if not 0 < self.target_fpr < 1:
            raise ConfigError("target_fpr must be in (0, 1)")
        need = min_calibration_samples(self.target_fpr)
        if self.null_trials < need:
            raise ConfigError(
                f"calibration resolution: target_fpr {self.target_fpr:g} needs at least "
                f"{need} null trials, got {self.null_trials}"
            )
        if self.bootstrap < 1:
            raise ConfigError("bootstrap must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.scenario == "trace" and not self.trace_path:
            raise ConfigError("scenario = trace needs trace_path")
        self.to_scenario()  # scenario-level checks
        return self

    def to_scenario(self, **changes) -> Scenario:
        flows = ()
        if self.scenario == "trace":
            try:
                flows = tuple(load_flows(self.trace_path))
            except OSError as exc:
                raise ConfigError(f"cannot read trace {self.trace_path}: {exc}") from exc
        params = dict(
            model=self.scenario,
            rate=self.rate,
            n_packets=self.n_packets,
            amplitude=self.amplitude,
            amplitude_warn=self.amplitude_warn,
            base_offset=self.base_offset,
            jitter_dist=self.jitter_dist,
            jitter_scale=self.jitter_scale,
            deviation_sigma=self.deviation_sigma,
            deviation_dist=self.deviation_dist,
            flows=flows,
        )
        params.update(changes)
        try:
            return Scenario(**params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def _format_value(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, tuple):
        return ",".join(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(cfg: ExperimentConfig, header: str | None = None) -> str:
    lines = [f"# {h}" for h in header.splitlines()] if header else []
    for f in fields(cfg):
        if f.name.startswith("_"):
            continue
        lines.append(f"{f.name} = {_format_value(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def parse_config(text: str, overrides: dict | None = None, source=None) -> ExperimentConfig:
    """Parse config text; ``overrides`` (already typed) win over file values."""
    values = {}
    where = f"{source}: " if source else ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError(f"{where}line {lineno}: expected 'key = value'")
        if key not in _PARSERS:
            raise ConfigError(f"{where}line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{where}line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{where}line {lineno}: bad value for {key}: {exc}") from None
    for key, value in (overrides or {}).items():
        if key not in _PARSERS:
            raise ConfigError(f"unknown key {key!r}")
        if value is not None:
            values[key] = value
    return ExperimentConfig(**values)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = parse_config(text, overrides, source=str(path))
    if cfg.trace_path and not Path(cfg.trace_path).is_absolute():
        cfg = ExperimentConfig(**{**_public(cfg), "trace_path": str(path.parent / cfg.trace_path)})
    return cfg


def _public(cfg: ExperimentConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(cfg) if not f.name.startswith("_")}
