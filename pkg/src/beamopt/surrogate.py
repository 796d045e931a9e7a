"""Tight concave minorants of the rate functions at the current iterate.

Scalar case, for any complex ``v`` and ``y >= 0``::

    ln(1 + |v|^2 / (y + s)) >= alpha + 2 Re(conj(vb) v) / (yb + s) - psi (|v|^2 + y)

with equality at ``(v, y) = (vb, yb)``.  The 2x2 case replaces ``|v|^2`` by
``V V^T`` and ``y`` by a PSD matrix ``Y``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .effective import EffectiveRows, IGSRowQuad, real_embedding, real_vector

_TINY = 1e-300


def scalar_minorant_params(v_bar, y_bar, sigma):
    """``(alpha, psi)`` of the scalar minorant; vectorized over inputs."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be positive")
    v2 = np.abs(np.asarray(v_bar)) ** 2
    ys = np.maximum(np.asarray(y_bar, dtype=float), 0.0) + sigma
    ratio = v2 / ys
    psi = v2 / (ys * (v2 + ys))
    alpha = np.log1p(ratio) - ratio - sigma * psi
    if np.ndim(alpha) == 0:
        return float(alpha), float(psi)
    return alpha, psi


def scalar_minorant_value(alpha, psi, v_bar, y_bar, sigma, v, y):
    """Right-hand side of the scalar inequality at ``(v, y)``."""
    ys = np.maximum(y_bar, 0.0) + sigma
    return alpha + 2 * np.real(np.conj(v_bar) * v) / ys - psi * (np.abs(v) ** 2 + y)


@dataclass(frozen=True)
class ScalarSurrogate:
    """Per-user minorants ``a_k + 2 Re(b_k x_k) - c_k sum_j |rows[j,k] x_j|^2``."""

    a: np.ndarray  # (K,)
    b: np.ndarray  # (K, d) complex
    c: np.ndarray  # (K,)
    rows: np.ndarray  # (K, K, d)

    def value(self, x: np.ndarray) -> np.ndarray:
        S = np.einsum("jkd,jd->jk", self.rows, x)
        lin = 2 * np.real(np.einsum("kd,kd->k", self.b, x))
        return self.a + lin - self.c * np.sum(np.abs(S) ** 2, axis=0)

    def penalty(self, gamma=None) -> np.ndarray:
        """Aggregated ``C_j = sum_k gamma_k c_k rows[j,k]^H rows[j,k]``."""
        w = self.c if gamma is None else gamma * self.c
        return np.einsum("k,jkd,jke->jde", w, self.rows.conj(), self.rows)

    def to_real(self) -> "RealQuadFamily":
        """Same functions on ``z_j = (Re x_j, Im x_j)``."""
        outer = np.einsum("jkd,jke->jkde", self.rows.conj(), self.rows)
        pen = self.c[None, :, None, None] * real_embedding(outer)
        return RealQuadFamily(self.a.copy(), real_vector(self.b), pen)


def scalar_rate_surrogate(rows: EffectiveRows, x: np.ndarray, sigma: float) -> ScalarSurrogate:
    """Minorants of all users' rates around the stacked free beams ``x`` (K, d)."""
    S = rows.signals(x)
    P = np.abs(S) ** 2
    v_bar = np.diag(S).copy()
    y_bar = P.sum(axis=0) - np.diag(P)
    alpha, psi = scalar_minorant_params(v_bar, y_bar, sigma)
    K = rows.K
    idx = np.arange(K)
    coef = np.conj(v_bar) / (np.maximum(y_bar, 0.0) + sigma)
    b = coef[:, None] * rows.rows[idx, idx]
    return ScalarSurrogate(np.atleast_1d(alpha), b, np.atleast_1d(psi), rows.rows)


def _inv2(A):
    det = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    out = np.empty_like(A)
    out[..., 0, 0] = A[..., 1, 1]
    out[..., 1, 1] = A[..., 0, 0]
    out[..., 0, 1] = -A[..., 0, 1]
    out[..., 1, 0] = -A[..., 1, 0]
    return out / det[..., None, None]


def _sym(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def matrix_minorant_params(V_bar, Y_bar, sigma):
    """``(alpha, B, C)`` of the 2x2 log-det minorant (batched over leading axes)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    V = np.asarray(V_bar, dtype=float)
    Y = _sym(np.asarray(Y_bar, dtype=float))
    I = np.eye(2)
    A = _inv2(Y + sigma * I)
    S = V @ np.swapaxes(V, -1, -2)
    C = _sym(A - _inv2(S + Y + sigma * I))
    B = np.swapaxes(V, -1, -2) @ A
    _, ld = np.linalg.slogdet(I + S @ A)
    alpha = ld - np.sum(A * S, axis=(-1, -2)) - sigma * np.trace(C, axis1=-2, axis2=-1)
    if np.ndim(alpha) == 0:
        alpha = float(alpha)
    return alpha, B, C


def matrix_minorant_value(alpha, B, C, V, Y):
    """Right-hand side ``alpha + 2 tr(B V) - <C, V V^T + Y>``."""
    S = V @ np.swapaxes(V, -1, -2)
    return (alpha + 2 * np.trace(B @ V, axis1=-2, axis2=-1)
            - np.sum(C * (S + Y), axis=(-1, -2)))


def psd_sqrt_2x2(C):
    """Closed-form square root of symmetric PSD 2x2 matrices (batched).

    Uses ``sqrt(C) = (C + sqrt(det) I) / sqrt(tr + 2 sqrt(det))`` after clamping
    the eigenvalues at zero.
    """
    C = _sym(np.asarray(C, dtype=float))
    a, b, c = C[..., 0, 0], C[..., 0, 1], C[..., 1, 1]
    det = a * c - b * b
    tr = a + c
    bad = (det < 0) | (tr < 0)
    if np.any(bad):
        # clamp negative eigenvalues (floating-point noise) before taking roots
        lam, U = np.linalg.eigh(C)
        lam = np.clip(lam, 0.0, None)
        C = np.where(bad[..., None, None], (U * lam[..., None, :]) @ np.swapaxes(U, -1, -2), C)
        a, b, c = C[..., 0, 0], C[..., 0, 1], C[..., 1, 1]
        det = np.maximum(a * c - b * b, 0.0)
        tr = a + c
    sd = np.sqrt(np.maximum(det, 0.0))
    t = np.sqrt(np.maximum(tr + 2 * sd, 0.0))
    safe = np.where(t > 0, t, 1.0)
    out = np.empty_like(C)
    out[..., 0, 0] = (a + sd) / safe
    out[..., 1, 1] = (c + sd) / safe
    out[..., 0, 1] = b / safe
    out[..., 1, 0] = b / safe
    return np.where((t > 0)[..., None, None], out, 0.0)


@dataclass(frozen=True)
class RealQuadFamily:
    """Concave quadratics ``f_k(z) = a_k + 2 lin_k . z_k - sum_j z_j^T pen[j,k] z_j``.

    ``z`` has shape (K, n); ``pen[j, k]`` is PSD.
    """

    a: np.ndarray  # (K,)
    lin: np.ndarray  # (K, n)
    pen: np.ndarray  # (K, K, n, n)

    def value(self, z: np.ndarray) -> np.ndarray:
        quad = np.einsum("jd,jkde,je->k", z, self.pen, z)
        return self.a + 2 * np.einsum("kd,kd->k", self.lin, z) - quad

    def scaled(self, s: float) -> "RealQuadFamily":
        return RealQuadFamily(self.a * s, self.lin * s, self.pen * s)


@dataclass(frozen=True)
class MatrixSurrogate:
    """Per-user minorants of ``2 * r_k`` (the un-halved IGS rate) on composite vectors:
    ``a_k + 2 bhat_k . v_k - sum_j v_j^T pen[j, k] v_j``."""

    a: np.ndarray  # (K,)
    bhat: np.ndarray  # (K, n)
    pen: np.ndarray  # (K, K, n, n)

    def value(self, v: np.ndarray) -> np.ndarray:
        return self.family().value(v)

    def family(self) -> RealQuadFamily:
        return RealQuadFamily(self.a, self.bhat, self.pen)

    def penalty(self, gamma=None) -> np.ndarray:
        K = self.a.shape[0]
        g = np.ones(K) if gamma is None else np.asarray(gamma, dtype=float)
        return np.einsum("k,jkde->jde", g, self.pen)


def igs_rate_surrogate(quad: IGSRowQuad, v: np.ndarray, sigma: float) -> MatrixSurrogate:
    """Minorants of ``2 r_k`` around composite iterate ``v`` (K, 4QM) for all users."""
    K = quad.K
    idx = np.arange(K)
    Hm = quad.matrices(v)
    sq = Hm @ np.swapaxes(Hm, -1, -2)
    V = Hm[idx, idx]
    Y = sq.sum(axis=0) - sq[idx, idx]
    alpha, B, C = matrix_minorant_params(V, Y, sigma)
    h1, h2, h3, h4 = quad.rows4  # each (K, K, n)
    # tr(B Hm(v)) = bhat . v
    bhat = (B[:, 0, 0, None] * h1[idx, idx] + B[:, 0, 1, None] * h3[idx, idx]
            + B[:, 1, 0, None] * h2[idx, idx] + B[:, 1, 1, None] * h4[idx, idx])
    R = psd_sqrt_2x2(C)
    c1, c2, c3 = R[:, 0, 0], R[:, 0, 1], R[:, 1, 1]
    # <C, Hm Hm^T> = ||sqrt(C) Hm||_F^2 = sum_l (u_l . v)^2
    u = np.stack([c1[None, :, None] * h1 + c2[None, :, None] * h3,
                  c1[None, :, None] * h2 + c2[None, :, None] * h4,
                  c2[None, :, None] * h1 + c3[None, :, None] * h3,
                  c2[None, :, None] * h2 + c3[None, :, None] * h4])
    pen = np.einsum("ljkd,ljke->jkde", u, u)
    return MatrixSurrogate(np.asarray(alpha, dtype=float).reshape(K), bhat, pen)
