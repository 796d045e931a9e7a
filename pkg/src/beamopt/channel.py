"""Correlated Rayleigh URA channels with distance path loss and log-normal shadowing.

Antenna ``(m, n)`` (0-based elevation ``m``, azimuth ``n``) sits at vector index
``n * M + m``; ``h.reshape(M, M, order="F")`` maps a channel vector back to the
``M x M`` matrix with the same convention.
"""

from __future__ import annotations

from dataclasses import dataclass
import logging
import math
import struct
from pathlib import Path

import numpy as np

from .model import ChannelSet, ScenarioConfig, dbm_to_watts

log = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-10
NEG_EIG_WARN = -1e-8


@dataclass(frozen=True)
class UEPlacement:
    distance_m: np.ndarray
    azimuth_deg: np.ndarray
    elevation_deg: np.ndarray

    def __post_init__(self):
        d = np.array(self.distance_m, dtype=float)
        a = np.array(self.azimuth_deg, dtype=float)
        e = np.array(self.elevation_deg, dtype=float)
        if d.ndim != 1 or a.shape != d.shape or e.shape != d.shape:
            raise ValueError("placement arrays must be 1-D and equal length")
        if np.any(d <= 0) or not np.all(np.isfinite(np.r_[d, a, e])):
            raise ValueError("distances must be positive and angles finite")
        for name, arr in (("distance_m", d), ("azimuth_deg", a), ("elevation_deg", e)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def K(self) -> int:
        return self.distance_m.shape[0]


def correlation_entry(m, n, p, q, alpha, beta, sigma_alpha, sigma_beta) -> complex:
    """Correlation between antenna (m, n) and antenna (p, q); angles in radians."""
    dp = p - m
    dq = q - n
    sa2 = sigma_alpha ** 2 * math.sin(alpha) ** 2
    g1 = np.exp(1j * math.pi * dp * math.cos(beta)) * math.exp(
        -0.5 * (sigma_beta * math.pi * dp * math.sin(beta)) ** 2)
    g2 = math.pi * dq * math.sin(beta)
    g3 = sigma_beta * math.pi * dq * math.cos(beta)
    g4 = 0.5 * (sigma_beta * math.pi) ** 2 * dp * dq * math.sin(2 * beta)
    g5 = g3 ** 2 * sa2 + 1.0
    g6 = g4 * sa2 + math.cos(alpha)
    g7 = g3 ** 2 * math.cos(alpha) ** 2 - g4 ** 2 * sa2 - 2 * g4 * math.cos(alpha)
    return complex(g1 / math.sqrt(g5) * math.exp(-g7 / (2 * g5))
                   * np.exp(1j * g2 * g6 / g5)
                   * math.exp(-(g2 * sigma_alpha * math.sin(alpha)) ** 2 / (2 * g5)))


def correlation_matrix(M, alpha, beta, sigma_alpha, sigma_beta) -> np.ndarray:
    """Full ``M^2 x M^2`` correlation matrix (vectorized :func:`correlation_entry`)."""
    idx = np.arange(M * M)
    m = (idx % M).astype(float)
    n = (idx // M).astype(float)
    dp = m[None, :] - m[:, None]
    dq = n[None, :] - n[:, None]
    sa2 = sigma_alpha ** 2 * np.sin(alpha) ** 2
    g1 = np.exp(1j * np.pi * dp * np.cos(beta)) * np.exp(
        -0.5 * (sigma_beta * np.pi * dp * np.sin(beta)) ** 2)
    g2 = np.pi * dq * np.sin(beta)
    g3 = sigma_beta * np.pi * dq * np.cos(beta)
    g4 = 0.5 * (sigma_beta * np.pi) ** 2 * dp * dq * np.sin(2 * beta)
    g5 = g3 ** 2 * sa2 + 1.0
    g6 = g4 * sa2 + np.cos(alpha)
    g7 = g3 ** 2 * np.cos(alpha) ** 2 - g4 ** 2 * sa2 - 2 * g4 * np.cos(alpha)
    return (g1 / np.sqrt(g5) * np.exp(-g7 / (2 * g5)) * np.exp(1j * g2 * g6 / g5)
            * np.exp(-(g2 * sigma_alpha * np.sin(alpha)) ** 2 / (2 * g5)))


def psd_sqrt(R: np.ndarray, check_hermitian: bool = True) -> np.ndarray:
    """Hermitian PSD square root after clamping negative eigenvalues to zero."""
    if check_hermitian:
        err = np.max(np.abs(R - R.conj().T))
        if err > HERMITIAN_TOL:
            raise ValueError(f"correlation matrix not Hermitian (max deviation {err:.3e})")
    Rh = 0.5 * (R + R.conj().T)
    lam, U = np.linalg.eigh(Rh)
    if lam[0] < NEG_EIG_WARN:
        log.warning("correlation matrix min eigenvalue %.3e below %.0e before repair",
                    lam[0], NEG_EIG_WARN)
    lam = np.clip(lam, 0.0, None)
    return (U * np.sqrt(lam)) @ U.conj().T


def pathloss_db(d, xi=0.0):
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    out = 19.56 + 39.08 * np.log10(d) + xi
    return float(out) if out.ndim == 0 else out


def noise_power(config: ScenarioConfig) -> float:
    return float(dbm_to_watts(config.noise_density_dBm_per_Hz + 10 * math.log10(config.bandwidth_Hz)))


def place_users(config: ScenarioConfig, rng: np.random.Generator) -> UEPlacement:
    """Uniform drop over the annulus ``[min_distance_m, cell_radius_m]``.

    Azimuth is the bearing in the horizontal plane.  The elevation angle is
    measured from the array's vertical axis (zenith), so a user level with
    the array sits at 90 degrees and users below it at larger angles.
    """
    K = config.K
    r0, R = config.min_distance_m, config.cell_radius_m
    r = np.sqrt(rng.uniform(r0 ** 2, R ** 2, size=K))
    phi = rng.uniform(-math.pi, math.pi, size=K)
    x, y = r * np.cos(phi), r * np.sin(phi)
    dh = config.bs_height_m - config.ue_height_m
    az = np.degrees(np.arctan2(y, x))
    el = 90.0 + np.degrees(np.arctan2(dh, r))
    return UEPlacement(r, az, el)


def generate_channels(config: ScenarioConfig, placement: UEPlacement,
                      rng: np.random.Generator, correlation=None) -> ChannelSet:
    """Draw one channel realisation per user.

    ``correlation`` overrides the per-user correlation matrices (a single
    ``M^2 x M^2`` array or a ``(K, M^2, M^2)`` stack); used by tests.
    """
    K, M = config.K, config.M
    if placement.K != K:
        raise ValueError("placement size does not match config.K")
    xi = rng.normal(0.0, config.sigma_sf_dB, size=K)
    rho = np.asarray(pathloss_db(placement.distance_m, xi), dtype=float).reshape(K)
    g = (rng.standard_normal((K, M * M)) + 1j * rng.standard_normal((K, M * M))) / math.sqrt(2)
    sa = math.radians(config.sigma_alpha_deg)
    sb = math.radians(config.sigma_beta_deg)
    H = np.empty((K, M, M), dtype=complex)
    for k in range(K):
        if correlation is None:
            R = correlation_matrix(M, math.radians(placement.azimuth_deg[k]),
                                   math.radians(placement.elevation_deg[k]), sa, sb)
        else:
            corr = np.asarray(correlation)
            R = corr[k] if corr.ndim == 3 else corr
        h = math.sqrt(10.0 ** (-rho[k] / 10.0)) * (psd_sqrt(R) @ g[k])
        H[k] = h.reshape(M, M, order="F")
    return ChannelSet(H, rho, noise_power(config))


def draw_scenario(config: ScenarioConfig, rng: np.random.Generator) -> ChannelSet:
    placement = place_users(config, rng)
    return generate_channels(config, placement, rng)


def rank_one_channel(h_e, h_a) -> np.ndarray:
    return np.outer(np.asarray(h_e, dtype=complex), np.asarray(h_a, dtype=complex))


_DUMP_MAGIC = b"BFCH"


def dump_channels(ch: ChannelSet, path) -> None:
    """Binary dump: magic, uint32 K, uint32 M, float64 sigma, then per user
    float64 rho_dB followed by the row-major entries of ``H_k`` as (re, im)
    float64 pairs; all little-endian."""
    with open(path, "wb") as f:
        f.write(_DUMP_MAGIC)
        f.write(struct.pack("<IId", ch.K, ch.M, ch.sigma))
        for k in range(ch.K):
            f.write(struct.pack("<d", ch.rho_dB[k]))
            pairs = np.stack([ch.H[k].real, ch.H[k].imag], axis=-1)
            f.write(pairs.astype("<f8").tobytes(order="C"))


def load_channels(path) -> ChannelSet:
    data = Path(path).read_bytes()
    if data[:4] != _DUMP_MAGIC:
        raise ValueError("not a channel dump file")
    K, M, sigma = struct.unpack_from("<IId", data, 4)
    off = 4 + struct.calcsize("<IId")
    rho = np.empty(K)
    H = np.empty((K, M, M), dtype=complex)
    rec = 8 + 16 * M * M
    if len(data) != off + K * rec:
        raise ValueError("channel dump truncated or oversized")
    for k in range(K):
        rho[k] = struct.unpack_from("<d", data, off)[0]
        pairs = np.frombuffer(data, dtype="<f8", count=2 * M * M, offset=off + 8).reshape(M, M, 2)
        H[k] = pairs[..., 0] + 1j * pairs[..., 1]
        off += rec
    return ChannelSet(H, rho, sigma)
