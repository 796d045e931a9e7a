"""Value types shared by every stage of the simulator.

Beamformer arrays use the layout ``(K, Q, M)``: user, outer-product index,
antenna index along one URA axis.  Stacking a user's ``Q`` beams into one
``QM`` vector is ``w[k].reshape(Q * M)`` (q-major), which is the column
ordering used by the effective-channel rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

# Relative slack applied to the sum-power budget when labelling a point feasible.
POWER_SLACK = 1e-9

LOG2E = 1.0 / math.log(2.0)


def dbm_to_watts(p_dbm):
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0) if np.ndim(p_dbm) else 10.0 ** ((p_dbm - 30.0) / 10.0)


def watts_to_dbm(p_w):
    return 10.0 * np.log10(p_w) + 30.0


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def nats_to_bps(x):
    return np.asarray(x, dtype=float) * LOG2E


def _frozen(a, dtype=complex):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical and algorithmic parameters of one experiment.

    Defaults reproduce the desk-scale scenario (4x4 URA, 6 users) with the
    cell geometry, propagation constants and convergence tolerance of the
    full-scale 8x8 setup.
    """

    M: int = 4
    K: int = 6
    Q: int = 2
    P_dBm: float = 30.0
    cell_radius_m: float = 250.0
    bs_height_m: float = 25.0
    ue_height_m: float = 1.5
    carrier_GHz: float = 2.0
    bandwidth_Hz: float = 10e6
    noise_density_dBm_per_Hz: float = -174.0
    sigma_sf_dB: float = 6.0
    sigma_alpha_deg: float = 5.0
    sigma_beta_deg: float = 5.0
    seed: int = 0
    tol: float = 1e-3
    max_iters: int = 200
    near_zero_threshold_bps: float = 0.01

    # Closest UE-to-BS horizontal distance used by the drop generator.
    min_distance_m: float = field(default=10.0, compare=True)

    def __post_init__(self):
        for name in ("M", "K", "Q", "max_iters"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                raise ValueError(f"{name} must be an integer, got {v!r}")
        if self.M < 1 or self.K < 1:
            raise ValueError("M and K must be >= 1")
        if not 1 <= self.Q <= self.M:
            raise ValueError(f"Q must lie in [1, M={self.M}], got {self.Q}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        positive = ("cell_radius_m", "bs_height_m", "ue_height_m", "carrier_GHz",
                    "bandwidth_Hz", "sigma_sf_dB", "sigma_alpha_deg",
                    "sigma_beta_deg", "tol", "near_zero_threshold_bps",
                    "min_distance_m")
        for name in positive:
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be strictly positive, got {v!r}")
        if not math.isfinite(self.P_dBm) or not math.isfinite(self.noise_density_dBm_per_Hz):
            raise ValueError("P_dBm and noise density must be finite")
        if self.min_distance_m >= self.cell_radius_m:
            raise ValueError("min_distance_m must be below cell_radius_m")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @property
    def P_watts(self) -> float:
        return float(dbm_to_watts(self.P_dBm))


@dataclass(frozen=True)
class ChannelSet:
    """Per-user ``M x M`` channels; ``H[k, m, n]`` links antenna (m, n) to user k.

    ``m`` indexes elevation and ``n`` azimuth.
    """

    H: np.ndarray
    rho_dB: np.ndarray
    sigma: float

    def __post_init__(self):
        H = _frozen(self.H)
        if H.ndim != 3 or H.shape[1] != H.shape[2]:
            raise ValueError(f"H must have shape (K, M, M), got {H.shape}")
        if not np.all(np.isfinite(H)):
            raise ValueError("channel entries must be finite")
        if not (self.sigma > 0):
            raise ValueError("noise power must be positive")
        rho = _frozen(self.rho_dB, dtype=float)
        if rho.shape != (H.shape[0],):
            raise ValueError("rho_dB must hold one value per user")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "rho_dB", rho)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def K(self) -> int:
        return self.H.shape[0]

    @property
    def M(self) -> int:
        return self.H.shape[1]

    def normalized(self) -> "ChannelSet":
        """Rescale so the noise power is 1 (P keeps its unit)."""
        return ChannelSet(self.H / math.sqrt(self.sigma), self.rho_dB, 1.0)


@dataclass(frozen=True)
class OuterProductBeamformer:
    """Rank-Q beamformer: ``W_k = sum_q w_e[k, q] w_a[k, q]^T``."""

    w_a: np.ndarray
    w_e: np.ndarray

    def __post_init__(self):
        w_a, w_e = _frozen(self.w_a), _frozen(self.w_e)
        if w_a.ndim != 3 or w_a.shape != w_e.shape:
            raise ValueError(f"w_a and w_e must share shape (K, Q, M); got {w_a.shape}, {w_e.shape}")
        object.__setattr__(self, "w_a", w_a)
        object.__setattr__(self, "w_e", w_e)

    @property
    def K(self) -> int:
        return self.w_a.shape[0]

    @property
    def Q(self) -> int:
        return self.w_a.shape[1]

    @property
    def M(self) -> int:
        return self.w_a.shape[2]

    def matrices(self) -> np.ndarray:
        return np.einsum("kqm,kqn->kmn", self.w_e, self.w_a)

    def stacked(self, axis: str) -> np.ndarray:
        w = self.w_a if axis_key(axis) == "a" else self.w_e
        return w.reshape(self.K, self.Q * self.M)


@dataclass(frozen=True)
class FDBeamformer:
    W: np.ndarray

    def __post_init__(self):
        W = _frozen(self.W)
        if W.ndim != 3 or W.shape[1] != W.shape[2]:
            raise ValueError(f"W must have shape (K, M, M), got {W.shape}")
        object.__setattr__(self, "W", W)

    @property
    def K(self) -> int:
        return self.W.shape[0]

    @property
    def M(self) -> int:
        return self.W.shape[1]

    def matrices(self) -> np.ndarray:
        return self.W


@dataclass(frozen=True)
class IGSBeamformer:
    """Improper-signalling beamformer.

    ``(w_a, w_e)`` beamform ``s_k`` and ``(wt_a, wt_e)`` beamform ``conj(s_k)``,
    each as a rank-Q sum of outer products.
    """

    w_a: np.ndarray
    w_e: np.ndarray
    wt_a: np.ndarray
    wt_e: np.ndarray

    def __post_init__(self):
        arrs = [_frozen(getattr(self, n)) for n in ("w_a", "w_e", "wt_a", "wt_e")]
        shape = arrs[0].shape
        if len(shape) != 3 or any(a.shape != shape for a in arrs):
            raise ValueError("all IGS beam arrays must share shape (K, Q, M)")
        for n, a in zip(("w_a", "w_e", "wt_a", "wt_e"), arrs):
            object.__setattr__(self, n, a)

    @property
    def K(self) -> int:
        return self.w_a.shape[0]

    @property
    def Q(self) -> int:
        return self.w_a.shape[1]

    @property
    def M(self) -> int:
        return self.w_a.shape[2]

    def proper(self) -> OuterProductBeamformer:
        return OuterProductBeamformer(self.w_a, self.w_e)

    def conjugate(self) -> OuterProductBeamformer:
        return OuterProductBeamformer(self.wt_a, self.wt_e)

    def matrices(self) -> np.ndarray:
        return self.proper().matrices()

    def conjugate_matrices(self) -> np.ndarray:
        return self.conjugate().matrices()

    def composite(self, axis: str) -> np.ndarray:
        """All users' composite real vectors, shape ``(K, 4QM)``."""
        if axis_key(axis) == "a":
            w, wt = self.w_a, self.wt_a
        else:
            w, wt = self.w_e, self.wt_e
        return stack_composite(w.reshape(self.K, -1), wt.reshape(self.K, -1))

    def with_axis(self, axis: str, v: np.ndarray) -> "IGSBeamformer":
        """Copy with one axis replaced by the beams encoded in composite ``v``."""
        w, wt = split_composite(np.asarray(v, dtype=float), self.Q, self.M)
        if axis_key(axis) == "a":
            return IGSBeamformer(w, self.w_e, wt, self.wt_e)
        return IGSBeamformer(self.w_a, w, self.wt_a, wt)

    @classmethod
    def from_proper(cls, bf: OuterProductBeamformer) -> "IGSBeamformer":
        z = np.zeros_like(bf.w_a)
        return cls(bf.w_a, bf.w_e, z, z)


@dataclass(frozen=True)
class RateReport:
    """Per-user rates (bps/Hz) and aggregate metrics of one design."""

    rates: np.ndarray
    sr: float
    mr: float
    gm: float
    jain_rate: float
    jain_power: float
    power_used: float
    num_near_zero: int

    @property
    def min_max_ratio(self) -> float:
        top = float(np.max(self.rates))
        return float(np.min(self.rates)) / top if top > 0 else 0.0


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    objective: float
    mr: float
    sr: float
    wall_ms: float


@dataclass
class ConvergenceTrace:
    """Per-iteration history; ``objective`` in nats, ``mr``/``sr`` in bps/Hz."""

    entries: list = field(default_factory=list)

    def append(self, iteration, objective, mr, sr, wall_ms):
        if self.entries and iteration <= self.entries[-1].iteration:
            raise ValueError("trace iterations must be strictly increasing")
        self.entries.append(TraceEntry(int(iteration), float(objective), float(mr),
                                       float(sr), float(wall_ms)))

    def objectives(self) -> np.ndarray:
        return np.array([e.objective for e in self.entries])

    def __len__(self):
        return len(self.entries)


def axis_key(axis: str) -> str:
    a = str(axis).lower()
    if a in ("a", "az", "azimuth"):
        return "a"
    if a in ("e", "el", "elevation"):
        return "e"
    raise ValueError(f"unknown axis {axis!r}; expected 'azimuth' or 'elevation'")


def other_axis(axis: str) -> str:
    return "elevation" if axis_key(axis) == "a" else "azimuth"


def assemble_bm(opbf: OuterProductBeamformer, k: int) -> np.ndarray:
    """Beamforming matrix of user ``k``: ``sum_q w_e[k,q] w_a[k,q]^T``."""
    if not 0 <= k < opbf.K:
        raise IndexError(f"user index {k} out of range for K={opbf.K}")
    return np.einsum("qm,qn->mn", opbf.w_e[k], opbf.w_a[k])


def stack_composite(w: np.ndarray, wt: np.ndarray) -> np.ndarray:
    """(Re w, Im w, Re wt, Im wt) along the last axis."""
    w = np.asarray(w)
    wt = np.asarray(wt)
    if w.shape != wt.shape:
        raise ValueError("proper and conjugate beams must share a shape")
    return np.concatenate([w.real, w.imag, wt.real, wt.imag], axis=-1)


def split_composite(v: np.ndarray, Q: int, M: int):
    """Inverse of :func:`stack_composite`, reshaped to ``(..., Q, M)`` complex pairs."""
    v = np.asarray(v, dtype=float)
    n = Q * M
    if v.shape[-1] != 4 * n:
        raise ValueError(f"composite length {v.shape[-1]} != 4*Q*M = {4 * n}")
    lead = v.shape[:-1]
    w = (v[..., :n] + 1j * v[..., n:2 * n]).reshape(*lead, Q, M)
    wt = (v[..., 2 * n:3 * n] + 1j * v[..., 3 * n:]).reshape(*lead, Q, M)
    return w, wt


def to_composite_real(igs: IGSBeamformer, axis: str, k: int) -> np.ndarray:
    if not 0 <= k < igs.K:
        raise IndexError(f"user index {k} out of range for K={igs.K}")
    return igs.composite(axis)[k]


def from_composite_real(v: np.ndarray, Q: int, M: int):
    """Recover ``(w, wt)``, each ``(Q, M)`` complex, from one composite vector."""
    return split_composite(v, Q, M)
