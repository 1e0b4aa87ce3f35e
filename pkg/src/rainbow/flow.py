"""Packet-timing flows, inter-packet delays and the flow text format.

A :class:`Flow` is stored as a float origin (the first timestamp, in seconds)
plus integer nanosecond offsets from that origin.  Offsets make differencing
and cumulative summation exact, so ``reconstruct(f.packets[0], ipd(f))``
reproduces ``f`` bit for bit even for epoch-scale timestamps.  The public
API speaks seconds throughout.

Flow text format, one packet per line::

    # comment
    flow_id,timestamp_seconds

Lines of one flow must be in non-decreasing timestamp order; flows may be
interleaved.
"""

from __future__ import annotations

import logging
import warnings
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FlowError, FlowFormatError, LengthMismatchError

log = logging.getLogger(__name__)

NS_PER_S = 1_000_000_000

# IpdVector: a 1-D float64 numpy array of inter-packet delays in seconds.
IpdVector = np.ndarray


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class Flow:
    """Ordered packet arrival times of one direction of one connection."""

    __slots__ = ("flow_id", "origin", "_offsets")

    def __init__(self, packets: Sequence[float], flow_id: str = ""):
        t = np.asarray(packets, dtype=np.float64)
        if t.ndim != 1 or t.size < 2:
            raise FlowError(f"flow {flow_id!r} needs at least 2 packets, got {t.size}")
        if not np.all(np.isfinite(t)):
            raise FlowError(f"flow {flow_id!r} has non-finite timestamps")
        if np.any(np.diff(t) < 0):
            raise FlowError(f"flow {flow_id!r} has decreasing timestamps")
        origin = float(t[0])
        offsets = np.rint((t - origin) * NS_PER_S).astype(np.int64)
        self._init(origin, offsets, flow_id)

    def _init(self, origin: float, offsets: np.ndarray, flow_id: str) -> None:
        object.__setattr__(self, "flow_id", str(flow_id))
        object.__setattr__(self, "origin", float(origin))
        object.__setattr__(self, "_offsets", _frozen(offsets))

    @classmethod
    def from_offsets(cls, origin: float, offsets_ns, flow_id: str = "") -> "Flow":
        """Build from an origin in seconds and integer nanosecond offsets."""
        offsets = np.array(offsets_ns, dtype=np.int64)
        if offsets.ndim != 1 or offsets.size < 2:
            raise FlowError(f"flow {flow_id!r} needs at least 2 packets, got {offsets.size}")
        if offsets[0] != 0:
            origin = origin + offsets[0] / NS_PER_S
            offsets = offsets - offsets[0]
        if np.any(np.diff(offsets) < 0):
            raise FlowError(f"flow {flow_id!r} has decreasing timestamps")
        self = cls.__new__(cls)
        self._init(origin, offsets, flow_id)
        return self

    def __setattr__(self, name, value):
        raise AttributeError("Flow is immutable")

    def __getstate__(self):
        return (self.flow_id, self.origin, np.array(self._offsets))

    def __setstate__(self, state):
        flow_id, origin, offsets = state
        self._init(origin, offsets, flow_id)

    @property
    def offsets_ns(self) -> np.ndarray:
        return self._offsets

    @property
    def packets(self) -> np.ndarray:
        """Arrival timestamps in seconds."""
        return _frozen(self.origin + self._offsets / NS_PER_S)

    def with_id(self, flow_id: str) -> "Flow":
        return Flow.from_offsets(self.origin, self._offsets, flow_id)

    def __len__(self) -> int:
        return int(self._offsets.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Flow):
            return NotImplemented
        return (
            self.flow_id == other.flow_id
            and self.origin == other.origin
            and np.array_equal(self._offsets, other._offsets)
        )

    def __hash__(self) -> int:
        return hash((self.flow_id, self.origin, self._offsets.tobytes()))

    def __repr__(self) -> str:
        return f"Flow(flow_id={self.flow_id!r}, n={len(self)}, origin={self.origin!r})"


def ipd(flow: Flow) -> IpdVector:
    """Inter-packet delays, ``t[i+1] - t[i]``, in seconds."""
    if len(flow) < 2:
        raise FlowError("flow has fewer than 2 packets")
    return _frozen(np.diff(flow.offsets_ns) / NS_PER_S)


def reconstruct(start: float, ipds, flow_id: str = "") -> Flow:
    """Inverse of :func:`ipd`: rebuild a flow starting at ``start``.

    Delays are rounded to whole nanoseconds, so ``ipd(reconstruct(t0, v)) == v``
    holds exactly whenever ``v`` came from :func:`ipd`.
    """
    v = np.asarray(ipds, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise FlowError("empty IPD vector yields a single-packet flow")
    if not np.all(np.isfinite(v)):
        raise FlowError("non-finite IPD")
    if np.any(v < 0):
        raise FlowError("negative IPD")
    steps = np.rint(v * NS_PER_S).astype(np.int64)
    offsets = np.concatenate(([0], np.cumsum(steps)))
    return Flow.from_offsets(float(start), offsets, flow_id)


def truncate_pair(a, b) -> tuple[IpdVector, IpdVector]:
    """Cut two IPD vectors to their common prefix length."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise LengthMismatchError("cannot align an empty IPD vector")
    n = min(a.size, b.size)
    return a[:n], b[:n]


# --- text format -------------------------------------------------------------


def _to_ns(delta: Decimal) -> int:
    return int((delta * NS_PER_S).to_integral_value(rounding=ROUND_HALF_EVEN))


def parse_flows(lines: Iterable[str], source=None) -> tuple[list[Flow], list[str]]:
    """Parse flow-format lines.

    Returns ``(flows, skipped_ids)``; flows with fewer than two packets are
    skipped rather than rejected.
    """
    stamps: dict[str, list[Decimal]] = {}
    last_line: dict[str, int] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2 or not parts[0].strip():
            raise FlowFormatError(f"expected 'flow_id,timestamp', got {line!r}", lineno, source)
        fid, ts_text = parts[0].strip(), parts[1].strip()
        try:
            ts = Decimal(ts_text)
        except InvalidOperation:
            raise FlowFormatError(f"bad timestamp {ts_text!r}", lineno, source) from None
        if not ts.is_finite():
            raise FlowFormatError(f"bad timestamp {ts_text!r}", lineno, source)
        seq = stamps.setdefault(fid, [])
        if seq and ts < seq[-1]:
            raise FlowFormatError(
                f"timestamp {ts_text} of flow {fid!r} precedes line {last_line[fid]}",
                lineno,
                source,
            )
        seq.append(ts)
        last_line[fid] = lineno

    flows, skipped = [], []
    for fid, seq in stamps.items():
        if len(seq) < 2:
            skipped.append(fid)
            continue
        t0 = seq[0]
        offsets = [_to_ns(t - t0) for t in seq]
        flows.append(Flow.from_offsets(float(t0), offsets, fid))
    return flows, skipped


def load_flows(path) -> list[Flow]:
    """Read a flow file; one :class:`Flow` per flow id in order of first appearance."""
    path = Path(path)
    with path.open() as fh:
        flows, skipped = parse_flows(fh, source=str(path))
    if skipped:
        msg = f"{path}: skipped {len(skipped)} flow(s) with fewer than 2 packets: {', '.join(skipped)}"
        log.warning(msg)
        warnings.warn(msg, stacklevel=2)
    return flows


def format_timestamps(flow: Flow) -> list[str]:
    """Decimal strings of ``flow``'s timestamps that parse back to the same flow."""
    base = Decimal(repr(flow.origin))
    return [format(base + Decimal(int(k)).scaleb(-9), "f") for k in flow.offsets_ns]


def write_flows(path_or_file, flows: Iterable[Flow], header: str | None = None) -> None:
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    for f in flows:
        lines.extend(f"{f.flow_id},{ts}" for ts in format_timestamps(f))
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        Path(path_or_file).write_text(text)
