"""Alternating minorize-maximize drivers for the seven beamforming designs.

=====  ======  ==========  =========================================
Alg    family  objective   step
=====  ======  ==========  =========================================
1      PGS     MR          max-min barrier solve per axis
2      PGS     GM          sum-of-logs barrier solve per axis
3      PGS     GM / SR     weighted closed form per axis
4      FD      MR / GM     barrier solve on vec(W)
5      FD      GM / SR     weighted closed form on vec(W)
6      IGS     MR          max-min barrier solve on composite vectors
7      IGS     GM / SR     weighted closed form on composite vectors
=====  ======  ==========  =========================================

Beam families: ``PGS`` is the rank-Q sum of outer products, ``FD`` the full
matrix, ``IGS`` the rank-Q improper-signalling pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import re
import time

import numpy as np

from . import effective as eff
from .model import (ChannelSet, FDBeamformer, IGSBeamformer, OuterProductBeamformer,
                    ConvergenceTrace, RateReport, ScenarioConfig, LOG2E)
from .rates import ObjectiveKind, beam_power, beam_rates, make_report, objective_value
from .solvers import QuadUpdateProblem, closed_form_update, solve_concave_quadratic
from .surrogate import RealQuadFamily, igs_rate_surrogate, scalar_rate_surrogate

log = logging.getLogger(__name__)

PGS, FD, IGS = "PGS", "FD", "IGS"
CLOSED, CONVEX = "closed-form", "convex"
AXES = ("azimuth", "elevation")

CONVEX_ITER_CAP = 100
MAX_HALVINGS = 20
RATE_FLOOR = 1e-8

_LABEL_RE = re.compile(r"^(?P<prefix>CX-|IGS-)?(?P<obj>GM|SR|MR)-(?:Q(?P<q>\d+)|(?P<fd>FD))$")


@dataclass(frozen=True)
class AlgorithmSpec:
    family: str
    objective: ObjectiveKind
    path: str
    Q: int | None = None

    def __post_init__(self):
        fam, obj, path = self.family, self.objective, self.path
        if fam not in (PGS, FD, IGS) or path not in (CLOSED, CONVEX):
            raise ValueError(f"unknown family/path {fam!r}/{path!r}")
        if obj == ObjectiveKind.MR and path != CONVEX:
            raise ValueError("MR designs need the convex-solver path")
        if fam == FD:
            if self.Q is not None:
                raise ValueError("FD designs take no rank")
            if path == CLOSED and obj == ObjectiveKind.MR:
                raise ValueError("invalid FD combination")
            if path == CONVEX and obj == ObjectiveKind.SR:
                raise ValueError("FD SR uses the closed-form path")
        else:
            if self.Q is None or self.Q < 1:
                raise ValueError("rank-Q designs need Q >= 1")
        if fam == IGS and obj != ObjectiveKind.MR and path != CLOSED:
            raise ValueError("IGS GM/SR designs use the closed-form path")

    @property
    def number(self) -> int:
        """Index of the design in the table of the module docstring."""
        if self.family == PGS:
            if self.objective == ObjectiveKind.MR:
                return 1
            return 2 if self.path == CONVEX else 3
        if self.family == FD:
            return 4 if self.path == CONVEX else 5
        return 6 if self.objective == ObjectiveKind.MR else 7

    @property
    def label(self) -> str:
        tail = "FD" if self.family == FD else f"Q{self.Q}"
        prefix = ""
        if self.family == IGS:
            prefix = "IGS-"
        elif self.path == CONVEX and self.objective != ObjectiveKind.MR:
            prefix = "CX-"
        return f"{prefix}{self.objective.value}-{tail}"

    @classmethod
    def from_label(cls, label: str) -> "AlgorithmSpec":
        m = _LABEL_RE.match(label.strip())
        if not m:
            raise ValueError(f"unknown algorithm label {label!r}")
        obj = ObjectiveKind(m["obj"])
        prefix = m["prefix"] or ""
        Q = None if m["fd"] else int(m["q"])
        if prefix == "IGS-":
            if Q is None:
                raise ValueError("IGS designs need a rank Q")
            path = CONVEX if obj == ObjectiveKind.MR else CLOSED
            return cls(IGS, obj, path, Q)
        fam = FD if Q is None else PGS
        if prefix == "CX-":
            if obj == ObjectiveKind.MR:
                raise ValueError("MR labels are already convex; drop the CX- prefix")
            return cls(fam, obj, CONVEX, Q)
        path = CONVEX if obj == ObjectiveKind.MR else CLOSED
        return cls(fam, obj, path, Q)


@dataclass
class RunResult:
    spec: AlgorithmSpec
    beamformer: object
    report: RateReport
    trace: ConvergenceTrace
    iterations: int
    converged: bool
    fallback_events: int = 0
    degraded_solves: int = 0
    objective_history: list = field(default_factory=list)


def gm_weights(rates, objective: ObjectiveKind = ObjectiveKind.GM) -> np.ndarray:
    """``gamma_k = max_j r_j / r_k`` (GM) or all ones (SR).

    Rates are floored at 1e-8 nats; the first maximal user gets exactly 1.
    """
    r = np.maximum(np.asarray(rates, dtype=float), RATE_FLOOR)
    if objective == ObjectiveKind.SR:
        return np.ones_like(r)
    top = int(np.argmax(r))
    g = r[top] / r
    g[top] = 1.0
    return g


def _cgauss(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def init_feasible(spec: AlgorithmSpec, K: int, M: int, P: float, rng: np.random.Generator):
    """Gaussian beams rescaled by one global factor onto the power budget."""
    if spec.family == FD:
        W = _cgauss(rng, (K, M, M))
        return FDBeamformer(W * np.sqrt(P / np.sum(np.abs(W) ** 2)))
    Q = spec.Q
    if Q > M:
        raise ValueError(f"rank Q={Q} exceeds M={M}")
    if spec.family == PGS:
        bf = OuterProductBeamformer(_cgauss(rng, (K, Q, M)), _cgauss(rng, (K, Q, M)))
        s = (P / beam_power(bf)) ** 0.25
        return OuterProductBeamformer(bf.w_a * s, bf.w_e * s)
    bf = IGSBeamformer(*[_cgauss(rng, (K, Q, M)) for _ in range(4)])
    s = (P / beam_power(bf)) ** 0.25
    return IGSBeamformer(bf.w_a * s, bf.w_e * s, bf.wt_a * s, bf.wt_e * s)


# -- per-family plumbing: free variable of one step and its reinsertion ----------

def _free(bf, axis):
    if isinstance(bf, FDBeamformer):
        return eff.fd_vec(bf.W)
    if isinstance(bf, IGSBeamformer):
        return bf.composite(axis)
    return bf.stacked(axis)


def _with_free(bf, axis, x):
    if isinstance(bf, FDBeamformer):
        return FDBeamformer(eff.fd_unvec(x, bf.M))
    if isinstance(bf, IGSBeamformer):
        return bf.with_axis(axis, x)
    w = x.reshape(bf.K, bf.Q, bf.M)
    if axis == "azimuth":
        return OuterProductBeamformer(w, bf.w_e)
    return OuterProductBeamformer(bf.w_a, w)


def _step_data(ch: ChannelSet, bf, axis):
    """Surrogate, power Gram and current free variable for one step.

    Returns ``(kind, surrogate, gram, x)`` where ``kind`` is "complex" or "real".
    """
    if isinstance(bf, FDBeamformer):
        rows = eff.build_rows_fd(ch)
        x = eff.fd_vec(bf.W)
        gram = np.broadcast_to(np.eye(x.shape[1]), (bf.K, x.shape[1], x.shape[1])).copy()
        return "complex", scalar_rate_surrogate(rows, x, ch.sigma), gram, x
    if isinstance(bf, IGSBeamformer):
        quad = eff.build_rows_igs(ch, bf, axis)
        v = bf.composite(axis)
        return "real", igs_rate_surrogate(quad, v, ch.sigma), eff.build_gram_igs(bf, axis), v
    rows = eff.build_rows_pgs(ch, bf, axis)
    x = bf.stacked(axis)
    return "complex", scalar_rate_surrogate(rows, x, ch.sigma), eff.build_gram_pgs(bf, axis), x


def _mask(n_keep, *arrs):
    """Restrict data to the first ``n_keep`` coordinates of every user block."""
    out = []
    for a in arrs:
        if a.ndim == 2:
            out.append(a[:, :n_keep])
        elif a.ndim == 3:
            out.append(a[:, :n_keep, :n_keep])
        else:
            out.append(a[:, :, :n_keep, :n_keep])
    return out


def closed_form_step(ch: ChannelSet, bf, axis, gamma, P, freeze_conjugate=False):
    """Weighted closed-form update of one axis (or of all W for FD)."""
    kind, sur, gram, x = _step_data(ch, bf, axis)
    C = sur.penalty(gamma)
    b = sur.b if kind == "complex" else sur.bhat
    if kind == "real" and freeze_conjugate:
        n = x.shape[1] // 2
        C, b, gram = _mask(n, C, b, gram)
        res = closed_form_update(QuadUpdateProblem(C, b, gamma, gram, P))
        xn = np.zeros_like(x)
        xn[:, :n] = res.x
    else:
        xn = closed_form_update(QuadUpdateProblem(C, b, gamma, gram, P)).x
    return _with_free(bf, axis, xn)


def convex_step(ch: ChannelSet, bf, axis, mode, P, freeze_conjugate=False):
    """Barrier solve of the max-min / sum-log / sum surrogate problem for one axis."""
    kind, sur, gram, x = _step_data(ch, bf, axis)
    if kind == "complex":
        fam = sur.to_real()
        G = eff.real_embedding(gram)
        z0 = eff.complex_to_real(x)
    else:
        fam = sur.family()
        G = gram
        z0 = x
    if kind == "real" and freeze_conjugate:
        n = x.shape[1] // 2
        lin, pen, G = _mask(n, fam.lin, fam.pen, G)
        fam = RealQuadFamily(fam.a, lin, pen)
        z0 = z0[:, :n]
    res = solve_concave_quadratic(fam, G, P, z0, mode=mode)
    z = res.z
    if kind == "complex":
        xn = eff.real_to_complex(z)
    elif freeze_conjugate:
        xn = np.zeros_like(x)
        xn[:, :z.shape[1]] = z
    else:
        xn = z
    return _with_free(bf, axis, xn), res.degraded


def _objective(ch, bf, kind: ObjectiveKind) -> float:
    return objective_value(beam_rates(ch, bf), kind)


def run_algorithm(spec: AlgorithmSpec, ch: ChannelSet, cfg: ScenarioConfig,
                  rng: np.random.Generator | None = None, init=None,
                  freeze_conjugate: bool = False, max_iters: int | None = None) -> RunResult:
    """Run one design to convergence on channel set ``ch`` (any noise scale).

    ``freeze_conjugate`` pins the IGS conjugate beams at their initial value of
    zero (used to check the reduction to the proper designs).
    """
    ch = ch.normalized()
    P = cfg.P_watts
    if init is None:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        init = init_feasible(spec, ch.K, ch.M, P, rng)
        if freeze_conjugate and isinstance(init, IGSBeamformer):
            init = IGSBeamformer(init.w_a, init.w_e, np.zeros_like(init.w_a), np.zeros_like(init.w_a))
            s = (P / beam_power(init)) ** 0.25
            init = IGSBeamformer(init.w_a * s, init.w_e * s, init.wt_a, init.wt_e)
    bf = init
    kind = spec.objective
    cap = max_iters or cfg.max_iters
    if spec.path == CONVEX:
        cap = min(cap, CONVEX_ITER_CAP)
    mode = {ObjectiveKind.MR: "maxmin", ObjectiveKind.GM: "gm", ObjectiveKind.SR: "sum"}[kind]
    axes = ("fd",) if spec.family == FD else AXES

    trace = ConvergenceTrace()
    t0 = time.perf_counter()
    obj = _objective(ch, bf, kind)
    history = [obj]

    def record(it):
        r = beam_rates(ch, bf) * LOG2E
        trace.append(it, obj, float(np.min(r)), float(np.sum(r)),
                     (time.perf_counter() - t0) * 1e3)

    record(0)
    fallbacks = degraded = 0
    converged = False
    it = 0
    for it in range(1, cap + 1):
        prev = obj
        for axis in axes:
            if spec.path == CLOSED:
                gamma = gm_weights(beam_rates(ch, bf), kind)
                cand = closed_form_step(ch, bf, axis, gamma, P, freeze_conjugate)
            else:
                cand, bad = convex_step(ch, bf, axis, mode, P, freeze_conjugate)
                degraded += int(bad)
            new = _objective(ch, cand, kind)
            if new < obj - 1e-12 * abs(obj):
                if spec.path == CLOSED:
                    fallbacks += 1
                    log.info("%s: closed-form step lowered the objective (%.3e -> %.3e); "
                             "halving toward previous iterate", spec.label, obj, new)
                    cand, new = _halve(ch, bf, cand, axis, obj, kind)
                else:
                    cand, new = bf, obj
            if new >= obj:
                bf, obj = cand, new
        history.append(obj)
        record(it)
        if abs(obj - prev) <= cfg.tol * abs(prev):
            converged = True
            break
    report = make_report(ch, bf, cfg.near_zero_threshold_bps)
    return RunResult(spec, bf, report, trace, it, converged, fallbacks, degraded, history)


def _halve(ch, bf, cand, axis, obj, kind):
    x0 = _free(bf, axis)
    x1 = _free(cand, axis)
    t = 1.0
    for _ in range(MAX_HALVINGS):
        t *= 0.5
        trial = _with_free(bf, axis, x0 + t * (x1 - x0))
        val = _objective(ch, trial, kind)
        if val >= obj:
            return trial, val
    return bf, obj


def run_alg1_mr_rankQ(ch, cfg, Q=None, **kw):
    return run_algorithm(AlgorithmSpec(PGS, ObjectiveKind.MR, CONVEX, Q or cfg.Q), ch, cfg, **kw)


def run_alg2_gm_convex_rankQ(ch, cfg, Q=None, **kw):
    return run_algorithm(AlgorithmSpec(PGS, ObjectiveKind.GM, CONVEX, Q or cfg.Q), ch, cfg, **kw)


def run_alg3_closed_rankQ(ch, cfg, objective=ObjectiveKind.GM, Q=None, **kw):
    return run_algorithm(AlgorithmSpec(PGS, ObjectiveKind(objective), CLOSED, Q or cfg.Q), ch, cfg, **kw)


def run_alg4_fd_convex(ch, cfg, objective=ObjectiveKind.MR, **kw):
    return run_algorithm(AlgorithmSpec(FD, ObjectiveKind(objective), CONVEX), ch, cfg, **kw)


def run_alg5_fd_closed(ch, cfg, objective=ObjectiveKind.GM, **kw):
    return run_algorithm(AlgorithmSpec(FD, ObjectiveKind(objective), CLOSED), ch, cfg, **kw)


def run_alg6_igs_mr(ch, cfg, Q=None, **kw):
    return run_algorithm(AlgorithmSpec(IGS, ObjectiveKind.MR, CONVEX, Q or cfg.Q), ch, cfg, **kw)


def run_alg7_igs_closed(ch, cfg, objective=ObjectiveKind.GM, Q=None, **kw):
    return run_algorithm(AlgorithmSpec(IGS, ObjectiveKind(objective), CLOSED, Q or cfg.Q), ch, cfg, **kw)
