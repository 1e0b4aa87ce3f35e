"""All-pairs flow linking: score every (incoming record, outgoing flow) pair.

Cost is quadratic in the number of flows; the pair count is reported so the
growth can be observed directly.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import JitterModel
from .detect import get_detector, score
from .errors import DegenerateInputError, LengthMismatchError
from .flow import Flow, ipd


@dataclass
class LinkTelemetry:
    pairs: int
    degenerate: int
    seconds: float
    degenerate_cells: list = field(default_factory=list)


@dataclass
class LinkMatrix:
    scores: np.ndarray  # (n_records, n_flows)
    decisions: np.ndarray  # bool, scores >= threshold
    assignments: list  # per record: best matching flow index, or None
    threshold: float
    telemetry: LinkTelemetry
    record_ids: list = field(default_factory=list)
    flow_ids: list = field(default_factory=list)

    def assigned_ids(self) -> list:
        return [None if j is None else self.flow_ids[j] for j in self.assignments]


def assign(scores: np.ndarray, threshold: float) -> tuple[np.ndarray, list]:
    """Threshold-gated argmax per row; ties go to the lowest column index."""
    decisions = scores >= threshold
    assignments = []
    for i in range(scores.shape[0]):
        if decisions[i].any():
            assignments.append(int(np.argmax(scores[i])))
        else:
            assignments.append(None)
    return decisions, assignments


def _reference_id(ref, i):
    return getattr(ref, "flow_id", f"r{i}")


def link_all(
    records: Sequence,
    flows: Sequence[Flow],
    detector: str,
    threshold: float,
    *,
    rate: float = 10.0,
    jitter: JitterModel | None = None,
    workers: int = 1,
) -> LinkMatrix:
    """Score all pairs with ``detector`` and gate each row's argmax by ``threshold``.

    ``records`` holds :class:`~rainbow.watermark.WatermarkRecord` objects, or
    plain IPD vectors when a passive detector is used.  Cells whose detector
    hits degenerate input score ``-inf``.
    """
    spec = get_detector(detector)
    jitter = jitter if jitter is not None else JitterModel()
    observed = [ipd(f) for f in flows]
    n, m = len(records), len(flows)
    if spec.watermark and not all(hasattr(r, "watermark") for r in records):
        raise TypeError(f"{detector} needs watermark records")

    def row(i):
        out = np.empty(m)
        bad = []
        for j in range(m):
            try:
                out[j] = score(detector, records[i], observed[j], rate=rate, jitter=jitter).value
            except (DegenerateInputError, LengthMismatchError):
                out[j] = -math.inf
                bad.append((i, j))
        return out, bad

    t0 = time.perf_counter()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(row, range(n)))
    else:
        rows = [row(i) for i in range(n)]
    elapsed = time.perf_counter() - t0

    scores = np.vstack([r[0] for r in rows]) if rows else np.empty((0, m))
    bad_cells = [c for r in rows for c in r[1]]
    decisions, assignments = assign(scores, threshold)
    telemetry = LinkTelemetry(n * m, len(bad_cells), elapsed, bad_cells)
    return LinkMatrix(
        scores,
        decisions,
        assignments,
        float(threshold),
        telemetry,
        [_reference_id(r, i) for i, r in enumerate(records)],
        [f.flow_id for f in flows],
    )
