"""RAINBOW embedder: keyed spread-spectrum chips added to IPDs by delaying packets.

The embedder first records the incoming IPDs (the non-blind state handed to
the detector), then releases packets through a virtual FIFO queue:

* packet 0 leaves at ``arrival + base_offset``;
* packet ``i+1`` targets ``release_i + ipd_i + w_i``;
* a packet never leaves before it arrives, nor before its predecessor.

When a constraint binds the realised IPD differs from the target.  Packets
released at arrival are counted in ``clip_count``; packets held back to
keep FIFO order (a negative target IPD, ``w_i < -ipd_i``) are counted
separately in ``fifo_holds``.  Only the first kind can happen once
``base_offset >= n * a``.  In delay terms this is the Lindley
recursion ``D[i+1] = max(0, D[i] + max(w_i, -ipd_i))`` with ``D[0] =
base_offset``, evaluated exactly on integer nanoseconds.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import FlowFormatError, LengthMismatchError
from .flow import NS_PER_S, Flow, ipd
from .seeding import make_rng

log = logging.getLogger(__name__)

DEFAULT_AMPLITUDE_WARN = 0.010
BASE_OFFSET_FACTOR = 10


@dataclass(frozen=True)
class WatermarkParams:
    key: int
    n: int
    amplitude: float = 0.005
    amplitude_warn: float = DEFAULT_AMPLITUDE_WARN

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("watermark length must be >= 1")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")
        if self.amplitude > self.amplitude_warn:
            warnings.warn(
                f"watermark amplitude {self.amplitude * 1e3:g} ms exceeds the "
                f"{self.amplitude_warn * 1e3:g} ms invisibility budget",
                stacklevel=3,
            )


@dataclass(frozen=True, eq=False)
class WatermarkSequence:
    values: np.ndarray
    amplitude: float

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return int(self.values.size)

    def __eq__(self, other):
        if not isinstance(other, WatermarkSequence):
            return NotImplemented
        return self.amplitude == other.amplitude and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class EmbedStats:
    base_offset: float
    clip_count: int  # packets released at arrival instead of their target
    fifo_holds: int = 0  # packets held to their predecessor's release (FIFO)

    @property
    def exact(self) -> bool:
        """True when every realised IPD equals its target."""
        return self.clip_count == 0 and self.fifo_holds == 0


@dataclass(frozen=True, eq=False)
class WatermarkRecord:
    """Detector-side state: incoming IPDs captured before perturbation, plus chips."""

    flow_id: str
    recorded_ipds: np.ndarray
    watermark: WatermarkSequence
    embed_stats: EmbedStats = field(default_factory=lambda: EmbedStats(0.0, 0))

    def __post_init__(self):
        r = np.array(self.recorded_ipds, dtype=np.float64)
        r.setflags(write=False)
        object.__setattr__(self, "recorded_ipds", r)
        if len(self.watermark) > r.size:
            raise LengthMismatchError("watermark longer than the recorded IPDs")

    def __eq__(self, other):
        if not isinstance(other, WatermarkRecord):
            return NotImplemented
        return (
            self.flow_id == other.flow_id
            and np.array_equal(self.recorded_ipds, other.recorded_ipds)
            and self.watermark == other.watermark
            and self.embed_stats == other.embed_stats
        )


def gen_watermark(params: WatermarkParams) -> WatermarkSequence:
    """``n`` i.i.d. uniform antipodal chips ``+-a`` derived from ``key``."""
    signs = make_rng(params.key).integers(0, 2, params.n)
    values = np.where(signs == 1, params.amplitude, -params.amplitude)
    return WatermarkSequence(values, params.amplitude)


def queue_delays(
    gaps_ns: np.ndarray, chips_ns: np.ndarray, base_ns: int
) -> tuple[np.ndarray, int, int]:
    """Per-packet queueing delays (ns), clip count and FIFO-hold count.

    ``gaps_ns`` are the incoming IPDs and ``chips_ns`` the per-IPD target
    perturbations (zero past the watermark).  Closed form of the Lindley
    recursion: ``D[k] = S[k] - min(-base, min_{0<j<=k} S[j])`` where ``S``
    are the prefix sums of the effective steps ``max(w, -ipd)``.
    """
    steps = np.maximum(chips_ns, -gaps_ns)
    s = np.concatenate(([0], np.cumsum(steps)))
    floor = s.copy()
    floor[0] = -base_ns
    delays = s - np.minimum.accumulate(floor)
    clips = int(np.count_nonzero(np.diff(delays) != steps))
    holds = int(np.count_nonzero(chips_ns < -gaps_ns))
    return delays, clips, holds


def embed(
    incoming: Flow, params: WatermarkParams, base_offset: float | None = None
) -> tuple[Flow, WatermarkRecord]:
    """Watermark ``incoming``; returns the outgoing flow and the detector record."""
    if base_offset is None:
        base_offset = BASE_OFFSET_FACTOR * params.amplitude
    if base_offset < 0:
        raise ValueError("base_offset must be >= 0")
    recorded = ipd(incoming)
    wm = gen_watermark(params)
    if len(wm) > recorded.size:
        wm = WatermarkSequence(wm.values[: recorded.size], wm.amplitude)

    arrivals = incoming.offsets_ns
    gaps = np.diff(arrivals)
    chips = np.zeros_like(gaps)
    chips[: len(wm)] = np.rint(wm.values * NS_PER_S).astype(np.int64)
    base_ns = int(round(base_offset * NS_PER_S))
    delays, clips, holds = queue_delays(gaps, chips, base_ns)

    outgoing = Flow.from_offsets(incoming.origin, arrivals + delays, incoming.flow_id)
    if clips or holds:
        log.debug("flow %r: %d clipped, %d FIFO-held packets", incoming.flow_id, clips, holds)
    stats = EmbedStats(float(base_offset), clips, holds)
    record = WatermarkRecord(incoming.flow_id, recorded, wm, stats)
    return outgoing, record


def max_delay_introduced(incoming: Flow, outgoing: Flow) -> float:
    """Largest ``release - arrival`` over all packets, in seconds."""
    if len(incoming) != len(outgoing):
        raise LengthMismatchError(
            f"packet count mismatch: {len(incoming)} incoming vs {len(outgoing)} outgoing"
        )
    diff_ns = outgoing.offsets_ns - incoming.offsets_ns
    return float((outgoing.origin - incoming.origin) + diff_ns.max() / NS_PER_S)


# --- record file format ------------------------------------------------------
#
#   record,<flow_id>
#   <recorded_ipd>,<chip>        one line per recorded IPD; chip empty past the watermark
#   stats,base_offset=<s>,clip_count=<k>,fifo_holds=<h>,amplitude=<a>


def format_record(rec: WatermarkRecord) -> str:
    lines = [f"record,{rec.flow_id}"]
    chips = rec.watermark.values
    for i, r in enumerate(rec.recorded_ipds):
        chip = repr(float(chips[i])) if i < chips.size else ""
        lines.append(f"{float(r)!r},{chip}")
    st = rec.embed_stats
    lines.append(
        f"stats,base_offset={st.base_offset!r},clip_count={st.clip_count},fifo_holds={st.fifo_holds},"
        f"amplitude={rec.watermark.amplitude!r}"
    )
    return "\n".join(lines) + "\n"


def write_records(path, records: Iterable[WatermarkRecord]) -> None:
    Path(path).write_text("".join(format_record(r) for r in records))


def parse_records(lines: Iterable[str], source=None) -> list[WatermarkRecord]:
    records = []
    current = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        head, _, rest = line.partition(",")
        if head == "record":
            if current is not None:
                raise FlowFormatError("record without stats trailer", lineno, source)
            current = {"flow_id": rest, "ipds": [], "chips": []}
        elif head == "stats":
            if current is None:
                raise FlowFormatError("stats line outside a record", lineno, source)
            try:
                kv = dict(item.split("=", 1) for item in rest.split(","))
                stats = EmbedStats(
                    float(kv["base_offset"]), int(kv["clip_count"]), int(kv.get("fifo_holds", 0))
                )
                amplitude = float(kv["amplitude"])
            except (KeyError, ValueError):
                raise FlowFormatError(f"bad stats trailer {line!r}", lineno, source) from None
            records.append(
                WatermarkRecord(
                    current["flow_id"],
                    current["ipds"],
                    WatermarkSequence(current["chips"], amplitude),
                    stats,
                )
            )
            current = None
        else:
            if current is None:
                raise FlowFormatError("data line outside a record", lineno, source)
            try:
                current["ipds"].append(float(head))
                if rest:
                    if len(current["chips"]) < len(current["ipds"]) - 1:
                        raise ValueError("chip after the watermark ended")
                    current["chips"].append(float(rest))
            except ValueError as exc:
                raise FlowFormatError(f"bad record line {line!r}: {exc}", lineno, source) from None
    if current is not None:
        raise FlowFormatError("unterminated record at end of file", None, source)
    return records


def load_records(path) -> list[WatermarkRecord]:
    path = Path(path)
    with path.open() as fh:
        return parse_records(fh, source=str(path))
