import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beamopt.effective import (build_gram_igs, build_gram_pgs, build_rows_fd, build_rows_igs,
                               build_rows_pgs, complex_to_real, fd_unvec, fd_vec, gram_power,
                               real_embedding, real_to_complex, real_vector)
from beamopt.model import ChannelSet, IGSBeamformer, OuterProductBeamformer
from beamopt.rates import cross_signals, power_igs, power_pgs, rate_pgs, sinr_rates

from conftest import cn, random_igs, random_instance


def test_scalar_row():
    ch = ChannelSet(np.ones((1, 1, 1)), [0.0], 1.0)
    bf = OuterProductBeamformer(np.ones((1, 1, 1)), np.full((1, 1, 1), 2.0))
    assert build_rows_pgs(ch, bf, "azimuth").rows[0, 0] == pytest.approx([2.0])


@pytest.mark.parametrize("axis", ["azimuth", "elevation"])
def test_rows_reproduce_signals(rng, axis):
    ch, bf = random_instance(rng)
    rows = build_rows_pgs(ch, bf, axis)
    S = rows.signals(bf.stacked(axis))
    assert np.allclose(S, cross_signals(ch, bf.matrices()), atol=1e-12)
    assert np.allclose(sinr_rates(S, ch.sigma), rate_pgs(ch, bf), atol=1e-10)


def test_zero_fixed_beams_give_zero_rows(rng):
    ch, bf = random_instance(rng)
    z = OuterProductBeamformer(bf.w_a, np.zeros_like(bf.w_e))
    assert not np.any(build_rows_pgs(ch, z, "azimuth").rows)


def test_fd_rows_and_vec(rng):
    ch, bf = random_instance(rng, Q=3)
    W = bf.matrices()
    x = fd_vec(W)
    assert np.array_equal(fd_unvec(x, 3), W)
    # antenna (m, n) sits at index n*M + m
    assert x[0, 1 * 3 + 2] == W[0, 2, 1]
    S = build_rows_fd(ch).signals(x)
    assert np.allclose(S, cross_signals(ch, W), atol=1e-12)


def test_gram_unit_beam_is_identity():
    w = np.zeros((1, 1, 3), dtype=complex)
    w[0, 0, 0] = 1.0
    bf = OuterProductBeamformer(w, w)
    assert np.allclose(build_gram_pgs(bf, "azimuth")[0], np.eye(3))


def test_gram_identical_beams():
    w = np.zeros((1, 2, 2), dtype=complex)
    w[0, :, 0] = 1.0
    G = build_gram_pgs(OuterProductBeamformer(w, w), "azimuth")[0]
    assert np.allclose(G, np.kron(np.ones((2, 2)), np.eye(2)))
    assert np.allclose(np.linalg.eigvalsh(G), [0, 0, 2, 2], atol=1e-12)


@pytest.mark.parametrize("axis", ["azimuth", "elevation"])
def test_gram_power_matches_direct(rng, axis):
    _, bf = random_instance(rng)
    G = build_gram_pgs(bf, axis)
    assert np.allclose(G, np.conj(np.swapaxes(G, -1, -2)), atol=1e-12)
    assert np.linalg.eigvalsh(G).min() >= -1e-9
    got = np.sum(gram_power(G, bf.stacked(axis)))
    assert got == pytest.approx(power_pgs(bf), rel=1e-10)


def test_real_forms(rng):
    A = cn(rng, 4, 4)
    A = A @ A.conj().T
    x = cn(rng, 4)
    b = cn(rng, 4)
    z = complex_to_real(x)
    assert np.array_equal(real_to_complex(z), x)
    assert z @ real_embedding(A) @ z == pytest.approx((x.conj() @ A @ x).real)
    assert real_vector(b) @ z == pytest.approx((b @ x).real)


def test_igs_rows_for_proper_beams(rng):
    ch, bf = random_instance(rng)
    ig = IGSBeamformer.from_proper(bf)
    quad = build_rows_igs(ch, ig, "azimuth")
    h = build_rows_pgs(ch, bf, "azimuth").rows
    zero = np.zeros_like(h.real)
    pattern = np.concatenate([h.real, -h.imag, zero, zero], axis=-1)
    assert np.array_equal(quad.rows4[0], pattern)
    assert np.array_equal(quad.rows4[3], pattern)
    Hm = quad.matrices(ig.composite("azimuth"))
    S = cross_signals(ch, bf.matrices())
    assert np.allclose(np.linalg.det(Hm), np.abs(S) ** 2, atol=1e-10)


@pytest.mark.parametrize("axis", ["azimuth", "elevation"])
def test_igs_rows_match_complex_product(rng, axis):
    ch, _ = random_instance(rng)
    ig = random_igs(rng)
    Hm = build_rows_igs(ch, ig, axis).matrices(ig.composite(axis))
    W, Wt = ig.matrices(), ig.conjugate_matrices()
    s = cn(rng, 3)
    for j in range(3):
        for k in range(3):
            y = np.trace(ch.H[k].T @ W[j]) * s[j] + np.trace(ch.H[k].T @ Wt[j]) * np.conj(s[j])
            got = Hm[j, k] @ np.array([s[j].real, s[j].imag])
            assert np.allclose(got, [y.real, y.imag], atol=1e-10)


def test_igs_gram_unit_beams():
    one = np.ones((1, 1, 1), dtype=complex)
    ig = IGSBeamformer(one, one, one, one)
    assert np.allclose(build_gram_igs(ig, "elevation")[0], np.eye(4))


def test_igs_gram_conjugate_block_zero(rng):
    _, bf = random_instance(rng)
    G = build_gram_igs(IGSBeamformer.from_proper(bf), "azimuth")
    d = 2 * bf.Q * bf.M
    assert not np.any(G[:, d:, :]) and not np.any(G[:, :, d:])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(0, 2 ** 32 - 1))
def test_igs_gram_power_property(K, Q, M, seed):
    Q = min(Q, M)
    r = np.random.default_rng(seed)
    ig = random_igs(r, K=K, Q=Q, M=M)
    for axis in ("azimuth", "elevation"):
        G = build_gram_igs(ig, axis)
        assert np.allclose(G, np.swapaxes(G, -1, -2))
        got = np.sum(gram_power(G, ig.composite(axis)))
        assert got == pytest.approx(power_igs(ig), rel=1e-10)
