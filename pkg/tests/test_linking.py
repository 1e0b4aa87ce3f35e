import math

import numpy as np
import pytest

from rainbow.analysis import calibrate_threshold
from rainbow.channel import JitterModel, apply_jitter
from rainbow.experiment import Scenario, run_trials
from rainbow.flow import ipd, reconstruct
from rainbow.linking import assign, link_all
from rainbow.seeding import derive_seed
from rainbow.traffic import ModelAParams, gen_model_a
from rainbow.watermark import WatermarkParams, embed

SEED = 2024
JITTER_B = 0.002


def _setup(k, n_packets=500, seed=SEED, jitter_b=JITTER_B):
    records, egress = [], []
    for i in range(k):
        x = gen_model_a(ModelAParams(10.0, n_packets, derive_seed(seed, i, "incoming")), f"in{i}")
        out, rec = embed(x, WatermarkParams(derive_seed(seed, i, "key"), n_packets - 1))
        jit = JitterModel("laplace", jitter_b, derive_seed(seed, i, "jitter"))
        egress.append(reconstruct(out.origin, apply_jitter(ipd(out), jit), f"out{i}"))
        records.append(rec)
    return records, egress


def test_single_pair_noiseless():
    x = reconstruct(0.0, np.full(50, 0.1), "x")
    out, rec = embed(x, WatermarkParams(1, 50), base_offset=1.0)
    m = link_all([rec], [out], "SLCorr", 0.5, jitter=JitterModel(scale=0.0))
    assert m.scores[0, 0] == pytest.approx(1.0, abs=1e-9)
    assert m.assignments == [0] and m.telemetry.pairs == 1


def test_twenty_by_twenty_all_linked():
    records, egress = _setup(20)
    m = link_all(records, egress, "SLCorr", 0.2)
    assert m.telemetry.pairs == 400
    assert m.scores.shape == (20, 20)
    assert m.assignments == list(range(20))
    assert np.array_equal(m.decisions, m.scores >= 0.2)


def test_worker_count_does_not_change_matrix():
    records, egress = _setup(6, n_packets=100)
    a = link_all(records, egress, "NonblindLRT-A", 0.0, workers=1)
    b = link_all(records, egress, "NonblindLRT-A", 0.0, workers=4)
    assert np.array_equal(a.scores, b.scores) and a.assignments == b.assignments


def test_permuting_flows_permutes_columns():
    records, egress = _setup(8, n_packets=200)
    perm = np.random.default_rng(0).permutation(8)
    a = link_all(records, egress, "SLCorr", 0.2)
    b = link_all(records, [egress[j] for j in perm], "SLCorr", 0.2)
    assert np.array_equal(b.scores, a.scores[:, perm])
    assert a.assigned_ids() == b.assigned_ids()


def test_absent_egress_unassigned():
    # threshold calibrated at FPR 1e-2 on the matching null scenario
    n_packets, m, fpr = 300, 10, 1e-2
    table = run_trials(Scenario(n_packets=n_packets), ["SLCorr"], 1, 1000, master_seed=5)
    thr = calibrate_threshold(table.h0("SLCorr"), fpr)
    unassigned = 0
    reps = 20
    for rep in range(reps):
        records, egress = _setup(m + 1, n_packets=n_packets, seed=100 + rep)
        res = link_all(records[:1], egress[1:], "SLCorr", thr)  # row 0's egress is missing
        unassigned += res.assignments[0] is None
    assert unassigned / reps >= 1 - m * fpr


def test_passive_accepts_ipd_vectors():
    records, egress = _setup(4, n_packets=100)
    a = link_all(records, egress, "PassiveCorr", 0.5)
    b = link_all([r.recorded_ipds for r in records], egress, "PassiveCorr", 0.5)
    assert a.scores.shape == b.scores.shape == (4, 4)
    assert np.array_equal(a.scores, b.scores)
    assert b.record_ids == ["r0", "r1", "r2", "r3"]
    with pytest.raises(TypeError):
        link_all([r.recorded_ipds for r in records], egress, "SLCorr", 0.5)


def test_degenerate_cells_score_minus_inf():
    records, egress = _setup(3, n_packets=50)
    m = link_all(records, egress, "NonblindLRT-A", 0.0, jitter=JitterModel(scale=0.0))
    assert m.telemetry.degenerate == 9
    assert np.all(m.scores == -math.inf)
    assert m.assignments == [None] * 3
    assert len(m.telemetry.degenerate_cells) == 9


def test_assign_ties_go_to_lowest_index():
    s = np.array([[0.5, 0.9, 0.9], [0.1, 0.2, 0.3], [-math.inf, -math.inf, 0.4]])
    decisions, assignments = assign(s, 0.35)
    assert assignments == [1, None, 2]
    assert decisions.tolist() == [[True, True, True], [False, False, False], [False, False, True]]
