"""Per-user rates (nats), objectives, powers and fairness metrics."""

from __future__ import annotations

import enum

import numpy as np

from .model import (ChannelSet, FDBeamformer, IGSBeamformer, OuterProductBeamformer,
                    RateReport, LOG2E)
from . import effective as eff


class ObjectiveKind(enum.Enum):
    SR = "SR"
    MR = "MR"
    GM = "GM"


def cross_signals(ch: ChannelSet, W: np.ndarray) -> np.ndarray:
    """``S[j, k] = tr(H_k^T W_j)``: user j's beamformer seen at user k."""
    return np.einsum("kmn,jmn->jk", ch.H, W)


def sinr_rates(S: np.ndarray, sigma: float) -> np.ndarray:
    P = np.abs(S) ** 2
    sig = np.diag(P).copy()
    interf = P.sum(axis=0) - sig
    return np.log1p(sig / (interf + sigma))


def rate_pgs(ch: ChannelSet, bf: OuterProductBeamformer) -> np.ndarray:
    # direct per-q evaluation of sum_q w_e^T H_k w_a, kept separate from assembly
    S = np.einsum("jqm,kmn,jqn->jk", bf.w_e, ch.H, bf.w_a)
    return sinr_rates(S, ch.sigma)


def rate_fd(ch: ChannelSet, bf: FDBeamformer) -> np.ndarray:
    return sinr_rates(cross_signals(ch, bf.W), ch.sigma)


def effective_2x2(ch: ChannelSet, bf: IGSBeamformer) -> np.ndarray:
    """Real 2x2 maps ``Hm[j, k]`` from (Re s_j, Im s_j) to (Re y_k, Im y_k)."""
    cp = cross_signals(ch, bf.matrices())
    cc = cross_signals(ch, bf.conjugate_matrices())
    return np.stack([np.stack([cp.real + cc.real, -cp.imag + cc.imag], -1),
                     np.stack([cp.imag + cc.imag, cp.real - cc.real], -1)], -2)


def igs_rates_from_matrices(Hm: np.ndarray, sigma: float) -> np.ndarray:
    K = Hm.shape[0]
    sq = Hm @ np.swapaxes(Hm, -1, -2)  # [H]^2 = H H^T
    idx = np.arange(K)
    total = sq.sum(axis=0)
    own = sq[idx, idx]
    Y = total - own + sigma * np.eye(2)
    # 1/2 ln det(I + S Y^-1) = 1/2 (ln det(S + Y) - ln det Y)
    _, ld_num = np.linalg.slogdet(own + Y)
    _, ld_den = np.linalg.slogdet(Y)
    return np.maximum(0.5 * (ld_num - ld_den), 0.0)


def rate_igs(ch: ChannelSet, bf: IGSBeamformer, axis=None) -> np.ndarray:
    """IGS rates.  ``axis=None`` evaluates the complex widely-linear model directly;
    ``axis`` in {azimuth, elevation} goes through that axis' composite-real rows."""
    if axis is None:
        Hm = effective_2x2(ch, bf)
    else:
        quad = eff.build_rows_igs(ch, bf, axis)
        Hm = quad.matrices(bf.composite(axis))
    return igs_rates_from_matrices(Hm, ch.sigma)


def power_pgs(bf: OuterProductBeamformer) -> float:
    return float(np.sum(np.abs(bf.matrices()) ** 2))


def power_pgs_gram(bf: OuterProductBeamformer, axis="azimuth") -> float:
    gram = eff.build_gram_pgs(bf, axis)
    return float(np.sum(eff.gram_power(gram, bf.stacked(axis))))


def power_fd(bf: FDBeamformer) -> float:
    return float(np.sum(np.abs(bf.W) ** 2))


def power_igs(bf: IGSBeamformer) -> float:
    return float(np.sum(np.abs(bf.matrices()) ** 2) + np.sum(np.abs(bf.conjugate_matrices()) ** 2))


def beam_power(bf) -> float:
    if isinstance(bf, IGSBeamformer):
        return power_igs(bf)
    if isinstance(bf, FDBeamformer):
        return power_fd(bf)
    return power_pgs(bf)


def beam_rates(ch: ChannelSet, bf) -> np.ndarray:
    if isinstance(bf, IGSBeamformer):
        return rate_igs(ch, bf)
    if isinstance(bf, FDBeamformer):
        return rate_fd(ch, bf)
    return rate_pgs(ch, bf)


def geometric_mean(r) -> float:
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        return 0.0
    return float(np.exp(np.mean(np.log(r))))


def objectives(r):
    """``(SR, MR, GM)`` of a rate vector."""
    r = np.asarray(r, dtype=float)
    return float(np.sum(r)), float(np.min(r)), geometric_mean(r)


def objective_value(r, kind: ObjectiveKind) -> float:
    sr, mr, gm = objectives(r)
    return {ObjectiveKind.SR: sr, ObjectiveKind.MR: mr, ObjectiveKind.GM: gm}[kind]


def jain_index(values) -> float:
    x = np.asarray(values, dtype=float)
    if np.any(x < 0):
        raise ValueError("Jain's index needs nonnegative values")
    s2 = np.sum(x ** 2)
    if s2 == 0:
        return 1.0
    return float(np.sum(x) ** 2 / (x.size * s2))


def antenna_power_profile(bf) -> np.ndarray:
    """Per-antenna transmit power, flattened with the channel vec convention."""
    W = bf.matrices()
    p = np.sum(np.abs(W) ** 2, axis=0)
    if isinstance(bf, IGSBeamformer):
        p = p + np.sum(np.abs(bf.conjugate_matrices()) ** 2, axis=0)
    return p.reshape(-1, order="F")


def near_zero_count(rates_bps, threshold_bps: float) -> int:
    return int(np.sum(np.asarray(rates_bps) < threshold_bps))


def make_report(ch: ChannelSet, bf, near_zero_threshold_bps: float = 0.01) -> RateReport:
    r = beam_rates(ch, bf) * LOG2E
    sr, mr, gm = objectives(r)
    return RateReport(rates=r, sr=sr, mr=mr, gm=gm, jain_rate=jain_index(r),
                      jain_power=jain_index(antenna_power_profile(bf)),
                      power_used=beam_power(bf),
                      num_near_zero=near_zero_count(r, near_zero_threshold_bps))
