import math

import numpy as np
import pytest

from beamopt.algorithms import (AlgorithmSpec, closed_form_step, gm_weights, init_feasible,
                                run_alg1_mr_rankQ, run_alg2_gm_convex_rankQ,
                                run_alg3_closed_rankQ, run_alg4_fd_convex, run_alg5_fd_closed,
                                run_alg6_igs_mr, run_algorithm)
from beamopt.channel import draw_scenario, rank_one_channel
from beamopt.model import ChannelSet, IGSBeamformer, ScenarioConfig
from beamopt.rates import ObjectiveKind, beam_power, beam_rates, objectives, power_fd

from conftest import cn

GM, SR, MR = ObjectiveKind.GM, ObjectiveKind.SR, ObjectiveKind.MR


@pytest.mark.parametrize("label,number", [
    ("MR-Q1", 1), ("MR-Q2", 1), ("CX-GM-Q2", 2), ("GM-Q1", 3), ("SR-Q2", 3),
    ("MR-FD", 4), ("CX-GM-FD", 4), ("GM-FD", 5), ("SR-FD", 5), ("IGS-MR-Q1", 6),
    ("IGS-GM-Q2", 7), ("IGS-SR-Q1", 7)])
def test_label_round_trip(label, number):
    spec = AlgorithmSpec.from_label(label)
    assert spec.label == label
    assert spec.number == number


@pytest.mark.parametrize("label", ["GM-Q", "XX-Q1", "CX-MR-Q1", "IGS-GM-FD", "CX-SR-FD", "gm-q1"])
def test_invalid_labels(label):
    with pytest.raises(ValueError):
        AlgorithmSpec.from_label(label)


def test_gm_weights():
    assert np.allclose(gm_weights([math.log(2), math.log(4)]), [2.0, 1.0])
    assert np.array_equal(gm_weights([0.3, 0.3, 0.3]), [1.0, 1.0, 1.0])
    assert np.array_equal(gm_weights([0.1, 5.0], SR), [1.0, 1.0])
    g = gm_weights([0.2, 0.0, 1.7, 0.4])
    assert g[2] == 1.0 and g.min() == 1.0 and np.all(np.isfinite(g))


@pytest.mark.parametrize("label", ["GM-Q2", "GM-FD", "IGS-GM-Q1"])
def test_init_feasible_on_budget(label):
    spec = AlgorithmSpec.from_label(label)
    a = init_feasible(spec, 3, 4, 0.7, np.random.default_rng(1))
    b = init_feasible(spec, 3, 4, 0.7, np.random.default_rng(1))
    assert beam_power(a) == pytest.approx(0.7, rel=1e-12)
    assert np.array_equal(a.matrices(), b.matrices())


def test_fd_init_overlaps_channel():
    H = cn(np.random.default_rng(0), 3, 3)
    spec = AlgorithmSpec.from_label("GM-FD")
    for seed in range(100):
        W = init_feasible(spec, 1, 3, 1.0, np.random.default_rng(seed)).W[0]
        assert abs(np.sum(H * W)) > 0


def _tiny(seed, K=2, M=2, P_dBm=30.0, sigma=1.0):
    r = np.random.default_rng(seed)
    return ChannelSet(cn(r, K, M, M) / math.sqrt(2), np.zeros(K), sigma), ScenarioConfig(
        M=M, K=K, Q=min(2, M), P_dBm=P_dBm, tol=1e-6, max_iters=400)


def _mrt_rate(ch, P):
    return math.log1p(P * np.linalg.norm(ch.H[0]) ** 2 / ch.sigma)


def test_single_user_mr_reaches_mrt_bound():
    ch, cfg = _tiny(3, K=1, M=2)
    res = run_alg1_mr_rankQ(ch, cfg, Q=2, rng=np.random.default_rng(0))
    r = beam_rates(ch, res.beamformer)
    sr, mr, gm = objectives(r)
    assert sr == mr == pytest.approx(gm)
    assert mr >= 0.99 * _mrt_rate(ch, cfg.P_watts)


def test_single_user_fd_designs_reach_mrt():
    ch, cfg = _tiny(4, K=1, M=3)
    bound = _mrt_rate(ch, cfg.P_watts)
    for run in (lambda: run_alg4_fd_convex(ch, cfg, rng=np.random.default_rng(0)),
                lambda: run_alg5_fd_closed(ch, cfg, rng=np.random.default_rng(0))):
        assert beam_rates(ch, run().beamformer)[0] >= 0.99 * bound


def test_single_user_gm_and_sr_agree():
    ch, cfg = _tiny(5, K=1, M=2)
    gm = run_alg3_closed_rankQ(ch, cfg, GM, Q=1, rng=np.random.default_rng(2))
    sr = run_alg3_closed_rankQ(ch, cfg, SR, Q=1, rng=np.random.default_rng(2))
    assert np.allclose(gm.beamformer.matrices(), sr.beamformer.matrices())


def test_single_user_convex_gm_matches_closed_form():
    ch, cfg = _tiny(6, K=1, M=2)
    cx = run_alg2_gm_convex_rankQ(ch, cfg, Q=1, rng=np.random.default_rng(3))
    cf = run_alg3_closed_rankQ(ch, cfg, GM, Q=1, rng=np.random.default_rng(3))
    assert cx.report.gm == pytest.approx(cf.report.gm, rel=1e-3)


def test_rank_one_channel_structured_matches_fd():
    r = np.random.default_rng(8)
    H = rank_one_channel(cn(r, 3), cn(r, 3))[None] / 2
    ch = ChannelSet(H, [0.0], 1.0)
    cfg = ScenarioConfig(M=3, K=1, Q=1, P_dBm=20.0, tol=1e-8)
    q1 = run_alg3_closed_rankQ(ch, cfg, GM, Q=1, rng=np.random.default_rng(0))
    fd = run_alg5_fd_closed(ch, cfg, rng=np.random.default_rng(0))
    assert q1.report.sr == pytest.approx(fd.report.sr, rel=1e-2)


def test_fd_closed_form_uses_full_budget():
    ch, cfg = _tiny(9, K=3, M=2, P_dBm=20.0)
    res = run_alg5_fd_closed(ch, cfg, SR, rng=np.random.default_rng(0), max_iters=5)
    assert abs(power_fd(res.beamformer) - cfg.P_watts) <= 1e-6 * cfg.P_watts


def test_full_rank_structured_mr_close_to_fd_mr():
    gaps = []
    for seed in range(3):
        ch, cfg = _tiny(20 + seed)
        q2 = run_alg1_mr_rankQ(ch, cfg, Q=2, rng=np.random.default_rng(seed))
        fd = run_alg4_fd_convex(ch, cfg, MR, rng=np.random.default_rng(seed))
        gaps.append(abs(q2.report.mr - fd.report.mr) / fd.report.mr)
    assert np.mean(gaps) <= 0.02


def test_fd_mr_dominates_rank_one_mr_on_average():
    fd, q1 = [], []
    for seed in range(10):
        ch, cfg = _tiny(40 + seed)
        fd.append(run_alg4_fd_convex(ch, cfg, MR, rng=np.random.default_rng(seed)).report.mr)
        q1.append(run_alg1_mr_rankQ(ch, cfg, Q=1, rng=np.random.default_rng(seed)).report.mr)
    assert np.mean(fd) >= np.mean(q1)


def test_igs_mr_with_frozen_conjugate_reproduces_proper_mr():
    ch, cfg = _tiny(11, K=2, M=2, P_dBm=25.0)
    cfg = ScenarioConfig(M=2, K=2, Q=1, P_dBm=25.0, tol=1e-3, max_iters=10)
    init = init_feasible(AlgorithmSpec.from_label("MR-Q1"), 2, 2, cfg.P_watts,
                         np.random.default_rng(1))
    proper = run_alg1_mr_rankQ(ch, cfg, Q=1, init=init)
    frozen = run_alg6_igs_mr(ch, cfg, Q=1, init=IGSBeamformer.from_proper(init),
                             freeze_conjugate=True)
    assert not np.any(frozen.beamformer.wt_a) and not np.any(frozen.beamformer.wt_e)
    assert frozen.report.mr == pytest.approx(proper.report.mr, abs=1e-6)


def test_igs_closed_form_step_with_masked_conjugate_matches_proper_step():
    ch, _ = _tiny(12, K=3, M=3)
    spec = AlgorithmSpec.from_label("GM-Q2")
    init = init_feasible(spec, 3, 3, 1.0, np.random.default_rng(5))
    gamma = gm_weights(beam_rates(ch, init))
    for axis in ("azimuth", "elevation"):
        proper = closed_form_step(ch, init, axis, gamma, 1.0)
        igs = closed_form_step(ch, IGSBeamformer.from_proper(init), axis, gamma, 1.0,
                               freeze_conjugate=True)
        assert np.allclose(igs.w_a, proper.w_a, atol=1e-8)
        assert np.allclose(igs.w_e, proper.w_e, atol=1e-8)
        assert not np.any(igs.wt_a) and not np.any(igs.wt_e)


@pytest.mark.slow
def test_igs_mr_rank_one_beats_proper_rank_one_on_average():
    igs, proper = [], []
    cfg = ScenarioConfig(M=2, K=3, Q=1, tol=1e-3)
    for seed in range(10):
        ch = draw_scenario(cfg, np.random.default_rng(seed))
        igs.append(run_alg6_igs_mr(ch, cfg, rng=np.random.default_rng(seed)).report.mr)
        proper.append(run_alg1_mr_rankQ(ch, cfg, rng=np.random.default_rng(seed)).report.mr)
    assert np.mean(igs) >= np.mean(proper)


@pytest.mark.parametrize("label", ["MR-Q1", "CX-GM-Q1", "GM-Q2", "SR-Q1", "MR-FD", "GM-FD",
                                   "SR-FD", "CX-GM-FD", "IGS-MR-Q1", "IGS-GM-Q1", "IGS-SR-Q1",
                                   "CX-SR-Q1"])
def test_runs_are_monotone_and_feasible(label):
    cfg = ScenarioConfig(M=3, K=4, Q=2, P_dBm=25.0)
    ch = draw_scenario(cfg, np.random.default_rng(7))
    res = run_algorithm(AlgorithmSpec.from_label(label), ch, cfg, np.random.default_rng(1),
                        max_iters=15)
    obj = res.trace.objectives()
    assert np.all(np.diff(obj) >= -1e-9 * np.abs(obj[:-1]))
    assert beam_power(res.beamformer) <= cfg.P_watts * (1 + 1e-6)
    assert [e.iteration for e in res.trace.entries] == list(range(res.iterations + 1))
    assert res.report.sr == pytest.approx(np.sum(res.report.rates))


def test_crowded_sum_rate_design_starves_users():
    cfg = ScenarioConfig(M=2, K=4, Q=1)
    starved = 0
    for seed in range(20):
        ch = draw_scenario(cfg, np.random.default_rng(100 + seed))
        res = run_alg5_fd_closed(ch, cfg, SR, rng=np.random.default_rng(seed))
        starved += res.report.num_near_zero >= 1
    assert starved > 10
