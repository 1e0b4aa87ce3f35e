"""Non-blind network flow watermarking (RAINBOW) and optimum passive/active detectors."""

__version__ = "0.1.0"

from .channel import JitterModel, apply_jitter, h0_difference_density
from .detect import (
    Decision,
    DetectionScore,
    decide,
    detect_nonblind_lrt_a,
    detect_passive,
    detect_passive_lrt_a,
    detect_slcorr,
    normalized_correlation,
)
from .flow import Flow, ipd, load_flows, reconstruct, truncate_pair, write_flows
from .traffic import ModelAParams, ModelBParams, gen_model_a, gen_model_b
from .watermark import (
    WatermarkParams,
    WatermarkRecord,
    WatermarkSequence,
    embed,
    gen_watermark,
    max_delay_introduced,
)

__all__ = [
    "Decision",
    "DetectionScore",
    "Flow",
    "JitterModel",
    "ModelAParams",
    "ModelBParams",
    "WatermarkParams",
    "WatermarkRecord",
    "WatermarkSequence",
    "apply_jitter",
    "decide",
    "detect_nonblind_lrt_a",
    "detect_passive",
    "detect_passive_lrt_a",
    "detect_slcorr",
    "embed",
    "gen_model_a",
    "gen_model_b",
    "gen_watermark",
    "h0_difference_density",
    "ipd",
    "load_flows",
    "max_delay_introduced",
    "normalized_correlation",
    "reconstruct",
    "truncate_pair",
    "write_flows",
]
