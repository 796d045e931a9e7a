"""Effective channels and power Grams for one alternating step.

With one beam axis held fixed, every signal term ``tr(H_k^T W_j)`` becomes a
linear form ``rows[j, k] @ x_j`` in the free axis (stacked q-major into a
``QM`` vector), and each user's power becomes a quadratic form in ``x_j``.
Index convention throughout: ``rows[j, k]`` carries user ``j``'s beam to
user ``k``'s receiver, so ``rows[k, k]`` is the desired link.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ChannelSet, IGSBeamformer, OuterProductBeamformer, axis_key


@dataclass(frozen=True)
class EffectiveRows:
    rows: np.ndarray  # (K, K, d) complex
    axis: str

    @property
    def K(self) -> int:
        return self.rows.shape[0]

    def signals(self, x: np.ndarray) -> np.ndarray:
        """``S[j, k] = rows[j, k] @ x[j]`` for stacked free beams ``x`` of shape (K, d)."""
        return np.einsum("jkd,jd->jk", self.rows, x)


def _axis_rows(H: np.ndarray, fixed: np.ndarray, axis: str) -> np.ndarray:
    K, Q, M = fixed.shape
    if H.shape[1:] != (M, M) or H.shape[0] != K:
        raise ValueError(f"channel shape {H.shape} incompatible with beams {fixed.shape}")
    if axis_key(axis) == "a":
        # signal = sum_q w_e[j,q]^T H_k w_a[j,q]
        r = np.einsum("jqm,kmn->jkqn", fixed, H)
    else:
        # signal = sum_q w_a[j,q]^T H_k^T w_e[j,q]
        r = np.einsum("jqn,kmn->jkqm", fixed, H)
    return r.reshape(K, K, Q * M)


def _fixed_beams(bf, axis: str) -> np.ndarray:
    return bf.w_e if axis_key(axis) == "a" else bf.w_a


def _fixed_conj_beams(bf: IGSBeamformer, axis: str) -> np.ndarray:
    return bf.wt_e if axis_key(axis) == "a" else bf.wt_a


def build_rows_pgs(ch: ChannelSet, bf: OuterProductBeamformer, axis: str) -> EffectiveRows:
    """Rows for optimizing ``axis`` with the other axis of ``bf`` held fixed."""
    return EffectiveRows(_axis_rows(ch.H, _fixed_beams(bf, axis), axis), axis)


def build_rows_fd(ch: ChannelSet) -> EffectiveRows:
    """FD rows: ``vec(H_k)`` for every transmitter, so ``S[j,k] = vec(H_k)^T vec(W_j)``."""
    K, M = ch.K, ch.M
    v = ch.H.reshape(K, M * M, order="F")
    return EffectiveRows(np.broadcast_to(v[None, :, :], (K, K, M * M)).copy(), "fd")


def fd_vec(W: np.ndarray) -> np.ndarray:
    K, M = W.shape[0], W.shape[1]
    return W.reshape(K, M * M, order="F")


def fd_unvec(x: np.ndarray, M: int) -> np.ndarray:
    return x.reshape(x.shape[0], M, M, order="F")


def beam_gram(fixed: np.ndarray) -> np.ndarray:
    """``G[k, q, q'] = w_q^H w_q'`` for beams of shape (K, Q, M)."""
    return np.einsum("kqm,kpm->kqp", fixed.conj(), fixed)


def build_gram_pgs(bf: OuterProductBeamformer, axis: str) -> np.ndarray:
    """Per-user ``kron(G, I_M)`` so that ``x_k^H Q_k x_k`` is user k's power."""
    G = beam_gram(_fixed_beams(bf, axis))
    M = bf.M
    return np.einsum("kqp,mn->kqmpn", G, np.eye(M)).reshape(bf.K, bf.Q * M, bf.Q * M)


def real_embedding(A: np.ndarray) -> np.ndarray:
    """Real form of a Hermitian matrix (batched): ``[[Re A, -Im A], [Im A, Re A]]``.

    ``z^T E z == x^H A x`` for ``z = (Re x, Im x)``.  The output is symmetrized.
    """
    Ar, Ai = A.real, A.imag
    top = np.concatenate([Ar, -Ai], axis=-1)
    bot = np.concatenate([Ai, Ar], axis=-1)
    E = np.concatenate([top, bot], axis=-2)
    return 0.5 * (E + np.swapaxes(E, -1, -2))


def real_vector(b: np.ndarray) -> np.ndarray:
    """``(Re b, -Im b)``: ``Re(b @ x) == real_vector(b) @ (Re x, Im x)``."""
    return np.concatenate([b.real, -b.imag], axis=-1)


def complex_to_real(x: np.ndarray) -> np.ndarray:
    return np.concatenate([x.real, x.imag], axis=-1)


def real_to_complex(z: np.ndarray) -> np.ndarray:
    d = z.shape[-1] // 2
    return z[..., :d] + 1j * z[..., d:]


@dataclass(frozen=True)
class IGSRowQuad:
    """Four real rows per (j, k) pair; ``rows4[l, j, k]`` has length ``4QM``."""

    rows4: np.ndarray  # (4, K, K, 4QM)
    axis: str

    @property
    def K(self) -> int:
        return self.rows4.shape[1]

    def matrices(self, v: np.ndarray) -> np.ndarray:
        """Effective 2x2 real matrices ``Hm[j, k]`` for composite beams ``v`` (K, 4QM).

        ``Hm[j, k] @ (Re s_j, Im s_j)`` is user j's contribution at user k.
        """
        p = np.einsum("ljkd,jd->jkl", self.rows4, v)
        return np.stack([np.stack([p[..., 0], p[..., 1]], -1),
                         np.stack([p[..., 2], p[..., 3]], -1)], -2)


def build_rows_igs(ch: ChannelSet, bf: IGSBeamformer, axis: str) -> IGSRowQuad:
    h = _axis_rows(ch.H, _fixed_beams(bf, axis), axis)
    ht = _axis_rows(ch.H, _fixed_conj_beams(bf, axis), axis)
    hr, hi, tr_, ti = h.real, h.imag, ht.real, ht.imag
    r1 = np.concatenate([hr, -hi, tr_, -ti], axis=-1)
    r2 = np.concatenate([-hi, -hr, ti, tr_], axis=-1)
    r3 = np.concatenate([hi, hr, ti, tr_], axis=-1)
    r4 = np.concatenate([hr, -hi, -tr_, ti], axis=-1)
    return IGSRowQuad(np.stack([r1, r2, r3, r4]), axis)


def build_gram_igs(bf: IGSBeamformer, axis: str) -> np.ndarray:
    """Block-diagonal real Gram (K, 4QM, 4QM) for the composite vectors of ``axis``."""
    K, Q, M = bf.K, bf.Q, bf.M
    d = Q * M
    eye = np.eye(M)
    G = beam_gram(_fixed_beams(bf, axis))
    Gt = beam_gram(_fixed_conj_beams(bf, axis))
    Qp = np.einsum("kqp,mn->kqmpn", G, eye).reshape(K, d, d)
    Qc = np.einsum("kqp,mn->kqmpn", Gt, eye).reshape(K, d, d)
    out = np.zeros((K, 4 * d, 4 * d))
    out[:, :2 * d, :2 * d] = real_embedding(Qp)
    out[:, 2 * d:, 2 * d:] = real_embedding(Qc)
    return out


def gram_power(gram: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Per-user ``x_k^H Q_k x_k`` (real part), complex or real inputs."""
    return np.einsum("kd,kde,ke->k", x.conj(), gram, x).real
