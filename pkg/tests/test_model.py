import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beamopt.model import (ChannelSet, ConvergenceTrace, FDBeamformer, IGSBeamformer,
                           OuterProductBeamformer, ScenarioConfig, assemble_bm, axis_key,
                           dbm_to_watts, from_composite_real, split_composite,
                           stack_composite, to_composite_real)

from conftest import cn, random_igs


def test_default_config_is_desk_scale():
    cfg = ScenarioConfig()
    assert (cfg.M, cfg.K, cfg.Q, cfg.P_dBm) == (4, 6, 2, 30.0)
    assert cfg.P_watts == pytest.approx(1.0)


@pytest.mark.parametrize("kw", [dict(M=0), dict(K=0), dict(Q=0), dict(Q=5), dict(tol=0.0),
                                dict(cell_radius_m=-1.0), dict(bandwidth_Hz=0.0),
                                dict(max_iters=0), dict(M=2.5)])
def test_config_rejects_invalid(kw):
    with pytest.raises(ValueError):
        ScenarioConfig(**kw)


def test_dbm_conversion():
    assert dbm_to_watts(30) == pytest.approx(1.0, rel=1e-15)
    assert dbm_to_watts(0) == pytest.approx(1e-3, rel=1e-15)
    assert dbm_to_watts(-104) == pytest.approx(3.981e-14, rel=1e-3)


def test_channel_set_validation():
    with pytest.raises(ValueError):
        ChannelSet(np.ones((1, 2, 2)), [0.0], 0.0)
    with pytest.raises(ValueError):
        ChannelSet(np.full((1, 2, 2), np.nan), [0.0], 1.0)
    with pytest.raises(ValueError):
        ChannelSet(np.ones((1, 2, 3)), [0.0], 1.0)


def test_normalized_channel_scales_by_noise():
    ch = ChannelSet(np.full((1, 1, 1), 2.0 + 0j), [0.0], 4.0)
    n = ch.normalized()
    assert n.sigma == 1.0
    assert n.H[0, 0, 0] == pytest.approx(1.0)


def test_assemble_scalar_sum_of_products():
    bf = OuterProductBeamformer(np.ones((1, 2, 1)), np.ones((1, 2, 1)))
    assert assemble_bm(bf, 0) == pytest.approx(np.array([[2.0]]))


def test_assemble_basis_outer_product():
    e1, e2 = np.array([1.0, 0]), np.array([0, 1.0])
    bf = OuterProductBeamformer(e2[None, None], e1[None, None])
    W = assemble_bm(bf, 0)
    expect = np.zeros((2, 2))
    expect[0, 1] = 1.0
    assert np.array_equal(W, expect)


def test_assemble_rank_bounded_by_Q(rng):
    bf = OuterProductBeamformer(cn(rng, 1, 2, 3), cn(rng, 1, 2, 3))
    s = np.linalg.svd(assemble_bm(bf, 0), compute_uv=False)
    assert np.sum(s > 1e-10 * s[0]) <= 2


def test_assemble_index_error(rng):
    bf = OuterProductBeamformer(cn(rng, 1, 1, 2), cn(rng, 1, 1, 2))
    with pytest.raises(IndexError):
        assemble_bm(bf, 1)


def test_beamformer_shape_checks(rng):
    with pytest.raises(ValueError):
        OuterProductBeamformer(cn(rng, 1, 1, 2), cn(rng, 1, 1, 3))
    with pytest.raises(ValueError):
        FDBeamformer(cn(rng, 1, 2, 3))


def test_composite_of_scalar_beam():
    bf = IGSBeamformer(np.array([[[1 + 2j]]]), np.ones((1, 1, 1)), np.zeros((1, 1, 1)),
                       np.zeros((1, 1, 1)))
    assert np.array_equal(to_composite_real(bf, "azimuth", 0), [1.0, 2.0, 0.0, 0.0])


def test_composite_of_zero_beams():
    z = np.zeros((2, 2, 3), dtype=complex)
    bf = IGSBeamformer(z, z, z, z)
    assert not np.any(bf.composite("elevation"))


def test_composite_round_trip(rng):
    bf = random_igs(rng, K=2, Q=2, M=3)
    for axis in ("azimuth", "elevation"):
        v = to_composite_real(bf, axis, 1)
        w, wt = from_composite_real(v, 2, 3)
        src = (bf.w_a, bf.wt_a) if axis == "azimuth" else (bf.w_e, bf.wt_e)
        assert np.array_equal(w, src[0][1])
        assert np.array_equal(wt, src[1][1])
        back = bf.with_axis(axis, bf.composite(axis))
        assert np.array_equal(back.w_a, bf.w_a) and np.array_equal(back.wt_e, bf.wt_e)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_composite_round_trip_property(Q, M, seed):
    r = np.random.default_rng(seed)
    w, wt = cn(r, Q, M), cn(r, Q, M)
    v = stack_composite(w.reshape(-1), wt.reshape(-1))
    w2, wt2 = split_composite(v, Q, M)
    assert np.array_equal(w2, w) and np.array_equal(wt2, wt)


def test_split_composite_length_check():
    with pytest.raises(ValueError):
        split_composite(np.zeros(7), 1, 2)


def test_axis_names():
    assert axis_key("Azimuth") == "a" and axis_key("el") == "e"
    with pytest.raises(ValueError):
        axis_key("radial")


def test_trace_requires_increasing_iterations():
    tr = ConvergenceTrace()
    tr.append(0, 1.0, 0.1, 1.0, 0.0)
    tr.append(1, 2.0, 0.2, 2.0, 1.0)
    with pytest.raises(ValueError):
        tr.append(1, 3.0, 0.3, 3.0, 2.0)
    assert list(tr.objectives()) == [1.0, 2.0]
    assert len(tr) == 2


def test_config_power_property():
    assert ScenarioConfig(P_dBm=20.0).P_watts == pytest.approx(0.1)
    assert math.isclose(ScenarioConfig(P_dBm=0.0).P_watts, 1e-3)
