"""Quadratic-update machinery: resolvent closed forms, power bisection,
ellipsoid projection and a log-barrier Newton solver for the max-min and
geometric-mean subproblems over concave quadratics."""

from __future__ import annotations

from dataclasses import dataclass
import logging

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .surrogate import RealQuadFamily

log = logging.getLogger(__name__)

BISECTION_TOL = 1e-6
# the closed-form update loses about lam * (P - power) in objective, so it bisects tighter
CLOSED_FORM_TOL = 1e-13
MAX_DOUBLINGS = 200
REG_REL = 1e-12

# barrier schedule: weight growth per centering, inner Newton cap, decrement stop
_MU = 20.0
_INNER_CAP = 50
_DEC_TOL = 1e-9
# barrier runs start from the warm start pulled slightly inside the budget
_START_SHRINK = 0.99


class InfeasibleNumerics(RuntimeError):
    """The power curve could not be bracketed."""


def _herm(A):
    return 0.5 * (A + np.swapaxes(A.conj(), -1, -2))


def power_bisection(f, P: float, tol: float = BISECTION_TOL, max_iter: int = 400) -> float:
    """Root of a decreasing power curve ``f(lam) = P``.

    Returns 0 when ``f(0) <= P``.  Otherwise returns ``lam`` on the feasible
    side (``f(lam) <= P``) with ``P - f(lam) <= tol * P``.
    """
    if f(0.0) <= P:
        return 0.0
    lo, hi = 0.0, 1.0
    n = 0
    while f(hi) > P:
        lo = hi
        hi *= 2.0
        n += 1
        if n > MAX_DOUBLINGS:
            raise InfeasibleNumerics("power curve not bracketed after 200 doublings")
    for _ in range(max_iter):
        fh = f(hi)
        if P - fh <= tol * P:
            return hi
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) > P:
            lo = mid
        else:
            hi = mid
    return hi


@dataclass(frozen=True)
class QuadUpdateProblem:
    """Per user: maximize ``2 Re(gamma_k b_k x_k) - x_k^H C_k x_k`` jointly under
    ``sum_k x_k^H Q_k x_k <= P``.  Works for real or complex data."""

    C: np.ndarray  # (K, d, d) PSD
    b: np.ndarray  # (K, d)
    gamma: np.ndarray  # (K,)
    Q: np.ndarray  # (K, d, d) PSD
    P: float

    def rhs(self) -> np.ndarray:
        return self.gamma[:, None] * np.conj(self.b)

    def objective(self, x: np.ndarray) -> float:
        lin = 2 * np.real(np.einsum("kd,kd->", self.gamma[:, None] * self.b, x))
        quad = np.einsum("kd,kde,ke->", x.conj(), self.C, x).real
        return float(lin - quad)

    def power(self, x: np.ndarray) -> float:
        return float(np.einsum("kd,kde,ke->", x.conj(), self.Q, x).real)


@dataclass(frozen=True)
class ClosedFormResult:
    x: np.ndarray
    lam: float
    power: float


def _regularize(C):
    d = C.shape[-1]
    tr = np.real(np.trace(C, axis1=-2, axis2=-1))
    eps = np.maximum(REG_REL * tr / d, 1e-300)
    return C + eps[:, None, None] * np.eye(d)


def closed_form_update(p: QuadUpdateProblem) -> ClosedFormResult:
    """``x_k = (C_k + lam Q_k)^{-1} gamma_k b_k^H`` with ``lam`` set by the budget.

    Each pencil ``(C_k, Q_k)`` is diagonalized once, so every bisection probe
    is a diagonal scaling.  The Cholesky factor of ``Q_k`` is used when the
    Grams are well conditioned, otherwise that of the regularized ``C_k``.
    """
    C = _regularize(_herm(np.asarray(p.C)))
    Qm = _herm(np.asarray(p.Q))
    rhs = p.rhs()
    LQ = None
    try:
        LQ = np.linalg.cholesky(Qm)
        diag = np.abs(np.diagonal(LQ, axis1=-2, axis2=-1))
        if np.min(diag) ** 2 < 1e-10 * np.max(diag) ** 2:
            LQ = None
    except np.linalg.LinAlgError:
        LQ = None
    if LQ is not None:
        # C + lam Q = L (A + lam I) L^H with A = L^{-1} C L^{-H}
        Li_C = np.linalg.solve(LQ, C)
        A = _herm(np.linalg.solve(LQ, np.swapaxes(Li_C.conj(), -1, -2)))
        theta, U = np.linalg.eigh(A)
        theta = np.clip(theta, 0.0, None)
        y = np.einsum("kde,kd->ke", U.conj(), np.linalg.solve(LQ, rhs[..., None])[..., 0])
        ay = np.abs(y) ** 2

        def power(lam):
            return float(np.sum(ay / np.maximum((theta + lam) ** 2, 1e-300)))

        lam = power_bisection(power, p.P, tol=CLOSED_FORM_TOL)
        z = np.einsum("kde,ke->kd", U, y / (theta + lam))
        L = LQ
    else:
        L = np.linalg.cholesky(C)
        # C + lam Q = L (I + lam B) L^H with B = L^{-1} Q L^{-H}
        Li_Q = np.linalg.solve(L, Qm)
        B = _herm(np.linalg.solve(L, np.swapaxes(Li_Q.conj(), -1, -2)))
        theta, U = np.linalg.eigh(B)
        theta = np.clip(theta, 0.0, None)
        y = np.einsum("kde,kd->ke", U.conj(), np.linalg.solve(L, rhs[..., None])[..., 0])
        w = theta * np.abs(y) ** 2

        def power(lam):
            return float(np.sum(w / (1.0 + lam * theta) ** 2))

        lam = power_bisection(power, p.P, tol=CLOSED_FORM_TOL)
        z = np.einsum("kde,ke->kd", U, y / (1.0 + lam * theta))
    LH = np.swapaxes(L.conj(), -1, -2)
    x = np.linalg.solve(LH, z[..., None])[..., 0]
    if not np.iscomplexobj(p.b) and not np.iscomplexobj(p.C):
        x = x.real
    return ClosedFormResult(x, lam, p.power(x))


def project_ellipsoid(x: np.ndarray, grams: np.ndarray, P: float,
                      tol: float = 1e-12):
    """Euclidean projection onto ``sum_k x_k^H Q_k x_k <= P``; returns ``(y, lam)``."""
    Qm = _herm(np.asarray(grams))
    theta, U = np.linalg.eigh(Qm)
    theta = np.clip(theta, 0.0, None)
    y = np.einsum("kde,kd->ke", U.conj(), x)
    w = theta * np.abs(y) ** 2
    if np.sum(w) <= P:
        return x.copy(), 0.0

    def power(lam):
        return float(np.sum(w / (1.0 + lam * theta) ** 2))

    lam = power_bisection(power, P, tol=tol)
    out = np.einsum("kde,ke->kd", U, y / (1.0 + lam * theta))
    if not np.iscomplexobj(x):
        out = out.real
    return out, lam


@dataclass(frozen=True)
class SolveResult:
    z: np.ndarray
    value: float
    kkt: float
    degraded: bool
    newton_steps: int


def _aggregate(vals: np.ndarray, mode: str) -> float:
    if mode == "maxmin":
        return float(np.min(vals))
    if mode == "gm":
        return float(np.sum(np.log(vals))) if np.all(vals > 0) else -np.inf
    return float(np.sum(vals))


class _BarrierProblem:
    """Concave family plus budget, with the derivatives the Newton steps need."""

    def __init__(self, fam: RealQuadFamily, grams: np.ndarray, P: float):
        self.fam = fam
        self.G = 0.5 * (grams + np.swapaxes(grams, -1, -2))
        self.P = float(P)
        self.K, self.n = fam.lin.shape
        self.N = self.K * self.n
        self.pen = 0.5 * (fam.pen + np.swapaxes(fam.pen, -1, -2))
        self.ar = np.arange(self.K)

    def _pen_times(self, z):
        """``out[j, k] = pen[j, k] @ z_j``, shape (K, K, n)."""
        return np.matmul(self.pen, z[:, None, :, None])[..., 0]

    def values(self, z):
        Pz = self._pen_times(z)
        quad = np.einsum("jd,jkd->k", z, Pz)
        return self.fam.a + 2 * np.einsum("kd,kd->k", self.fam.lin, z) - quad

    def eval(self, z):
        """Values ``f`` (K,) and gradients ``gf`` (K, N) of all members."""
        Pz = self._pen_times(z)
        quad = np.einsum("jd,jkd->k", z, Pz)
        f = self.fam.a + 2 * np.einsum("kd,kd->k", self.fam.lin, z) - quad
        g = -2.0 * np.swapaxes(Pz, 0, 1)  # g[k, j] = -2 pen[j,k] z_j
        g[self.ar, self.ar] += 2.0 * self.fam.lin
        return f, g.reshape(self.K, self.N)

    def quad_dir(self, dz):
        """``q[k] = sum_j dz_j^T pen[j,k] dz_j``."""
        return np.einsum("jd,jkd->k", dz, self._pen_times(dz))

    def power(self, z):
        return float(np.einsum("kd,kde,ke->", z, self.G, z))

    def power_grad(self, z):
        return 2.0 * np.einsum("kde,ke->kd", self.G, z).reshape(self.N)

    def hess_blocks(self, weights):
        """Block diagonal of ``sum_k weights_k * Hess f_k``, shape (K, n, n)."""
        return -2.0 * np.einsum("k,jkde->jde", weights, self.pen)


def _newton_solve(Hmat, g):
    """Newton direction ``-Hmat^{-1} g`` for a negative definite Hessian."""
    A = -0.5 * (Hmat + Hmat.T)
    try:
        return cho_solve(cho_factor(A, check_finite=False), g, check_finite=False)
    except np.linalg.LinAlgError:
        A = A + (1e-12 * np.trace(A) / A.shape[0] + 1e-300) * np.eye(A.shape[0])
        return np.linalg.lstsq(A, g, rcond=None)[0]


def _max_step(c0, beta, q):
    """Largest ``a >= 0`` keeping ``c0 + a beta - a^2 q > 0`` (``c0 > 0``, ``q >= 0``)."""
    c0, beta, q = np.atleast_1d(c0), np.atleast_1d(beta), np.atleast_1d(q)
    out = np.full(c0.shape, np.inf)
    pos = q > 0
    out[pos] = (beta[pos] + np.sqrt(beta[pos] ** 2 + 4 * q[pos] * c0[pos])) / (2 * q[pos])
    lin = ~pos & (beta < 0)
    out[lin] = c0[lin] / -beta[lin]
    return float(np.min(out))


def _center(bp: _BarrierProblem, z, t, s, mode, max_steps):
    """Damped Newton centering of the barrier function at weight ``s``.

    ``maxmin``: ``s t + sum log(f_k - t) + log(P - pow)``
    ``gm``:     ``s sum log f_k + log(P - pow)``
    ``sum``:    ``s sum f_k + log(P - pow)``
    Every term is a quadratic along a search line, so the line search is exact
    scalar arithmetic.
    """
    K, n, N = bp.K, bp.n, bp.N
    steps = 0
    for _ in range(max_steps):
        f, gf = bp.eval(z)
        v = bp.P - bp.power(z)
        gpow = bp.power_grad(z)
        Hz = -np.outer(gpow, gpow) / v ** 2
        if mode == "maxmin":
            u = f - t
            w = 1.0 / u
            gw = gf * w[:, None]
            gz = gw.sum(axis=0) - gpow / v
            Hz -= gw.T @ gw
            blocks = bp.hess_blocks(w) - 2.0 * bp.G / v
        elif mode == "gm":
            w = 1.0 / f
            gw = gf * w[:, None]
            gz = s * gw.sum(axis=0) - gpow / v
            Hz -= s * (gw.T @ gw)
            blocks = s * bp.hess_blocks(w) - 2.0 * bp.G / v
        else:
            gz = s * gf.sum(axis=0) - gpow / v
            blocks = s * bp.hess_blocks(np.ones(K)) - 2.0 * bp.G / v
        Hz4 = Hz.reshape(K, n, K, n)
        Hz4[bp.ar, :, bp.ar, :] += blocks
        if mode == "maxmin":
            H = np.empty((N + 1, N + 1))
            H[:N, :N] = Hz
            ht = (gf * (w ** 2)[:, None]).sum(axis=0)
            H[:N, N] = ht
            H[N, :N] = ht
            H[N, N] = -np.sum(w ** 2)
            g = np.append(gz, s - np.sum(w))
        else:
            H, g = Hz, gz
        d = _newton_solve(H, g)
        dec = float(g @ d)
        steps += 1
        if not dec / 2 > _DEC_TOL:
            break
        dz = d[:N]
        dt = d[N] if mode == "maxmin" else 0.0
        beta = gf @ dz
        q = bp.quad_dir(dz.reshape(K, n))
        bv = -float(gpow @ dz)
        qv = bp.power(dz.reshape(K, n))

        if mode == "maxmin":
            c0, cb = u, beta - dt
        else:
            c0, cb = f, beta
        if mode == "sum":
            amax = _max_step(np.array([v]), np.array([bv]), np.array([qv]))
        else:
            amax = _max_step(np.append(c0, v), np.append(cb, bv), np.append(q, qv))

        def phi(a):
            vv = v + a * bv - a * a * qv
            cc = c0 + a * cb - a * a * q
            if vv <= 0 or (mode != "sum" and np.any(cc <= 0)):
                return -np.inf
            if mode == "maxmin":
                return s * (t + a * dt) + np.sum(np.log(cc)) + np.log(vv)
            if mode == "gm":
                return s * np.sum(np.log(cc)) + np.log(vv)
            return s * np.sum(cc) + np.log(vv)

        base = phi(0.0)
        a = min(1.0, 0.99 * amax)
        for _ in range(60):
            if phi(a) >= base + 0.25 * a * dec:
                # confirm strict feasibility with a fresh evaluation (rounding)
                zn = z + a * dz.reshape(K, n)
                fn = bp.values(zn)
                ok = bp.P - bp.power(zn) > 0
                if mode == "maxmin":
                    ok = ok and np.all(fn - (t + a * dt) > 0)
                elif mode == "gm":
                    ok = ok and np.all(fn > 0)
                if ok:
                    break
            a *= 0.5
        else:
            break
        z = zn
        t = t + a * dt
    return z, t, steps


def _barrier(bp: _BarrierProblem, z0, mode, gap_tol, max_newton):
    z = z0.copy()
    f, gf = bp.eval(z)
    t = 0.0
    if mode == "maxmin":
        fmin = float(np.min(f))
        t = fmin - max(abs(fmin), 1.0)
        s = float(np.sum(1.0 / (f - t)))
        m = bp.K + 1
    else:
        a = gf.sum(axis=0) if mode == "sum" else (gf / f[:, None]).sum(axis=0)
        c = bp.power_grad(z) / (bp.P - bp.power(z))
        aa = float(a @ a)
        s = max(float(a @ c) / aa, 1e-3) if aa > 0 else 1.0
        m = 1
    steps = 0
    while True:
        z, t, k = _center(bp, z, t, s, mode, min(_INNER_CAP, max_newton - steps))
        steps += k
        gap = m / s
        f = bp.values(z)
        scale = {"maxmin": max(1.0, abs(float(np.min(f)))), "gm": 1.0,
                 "sum": max(1.0, abs(float(np.sum(f))))}[mode]
        if gap <= gap_tol * scale or steps >= max_newton:
            return z, gap, steps
        s *= _MU


def _interior_start(bp: _BarrierProblem, z: np.ndarray, shrink: float) -> np.ndarray:
    pw = bp.power(z)
    if pw >= bp.P * shrink:
        z = z * np.sqrt(bp.P * shrink / pw)
    return z


def solve_concave_quadratic(fam: RealQuadFamily, grams: np.ndarray, P: float,
                            warm_start: np.ndarray, mode: str = "maxmin",
                            gap_tol: float = 1e-8, max_newton: int = 400) -> SolveResult:
    """Maximize ``min_k f_k`` (``mode='maxmin'``), ``sum_k log f_k``
    (``mode='gm'``) or ``sum_k f_k`` (``mode='sum'``) over the power ellipsoid.

    Log-barrier interior-point method.  Never returns a point worse than
    ``warm_start``: the warm start itself is returned, flagged degraded, if the
    barrier run does not improve on it.  ``kkt`` reports the final duality-gap
    bound of the barrier path.
    """
    if mode not in ("maxmin", "gm", "sum"):
        raise ValueError(f"unknown mode {mode!r}")
    bp = _BarrierProblem(fam, np.asarray(grams, dtype=float), P)
    z_w = np.asarray(warm_start, dtype=float)
    ref = _aggregate(bp.values(z_w), mode)
    z0 = _interior_start(bp, z_w, _START_SHRINK)
    if mode == "gm" and np.any(bp.values(z0) <= 0):
        # move to a point where every surrogate is positive first
        zm, _, _ = _barrier(bp, z0, "maxmin", 1e-6, max_newton)
        if np.min(bp.values(zm)) <= 0:
            return SolveResult(z_w.copy(), ref, np.inf, True, 0)
        z0 = _interior_start(bp, zm, _START_SHRINK)
    z, gap, steps = _barrier(bp, z0, mode, gap_tol, max_newton)
    degraded = steps >= max_newton
    val = _aggregate(bp.values(z), mode)
    if not (val >= ref) or bp.power(z) > P * (1 + 1e-9):
        return SolveResult(z_w.copy(), ref, gap, True, steps)
    return SolveResult(z, val, gap, degraded, steps)


def solve_maxmin_concave_quadratic(fam, grams, P, warm_start, **kw) -> SolveResult:
    return solve_concave_quadratic(fam, grams, P, warm_start, mode="maxmin", **kw)


def gm_convex_step(fam, grams, P, warm_start, **kw) -> SolveResult:
    return solve_concave_quadratic(fam, grams, P, warm_start, mode="gm", **kw)
