"""Taylor multi-head self-attention: exact softmax reference, linearized
first-order Taylor evaluation, MSAR local correction, the SCEA gating
branch, and closed-form complexity accounting.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arrays import ConvSpec, add_macs, conv2d, sigmoid, softmax
from .errors import DegenerateAttentionError, ShapeError

__all__ = [
    "AttentionInput",
    "OpCount",
    "softmax_attention",
    "taylor_attention",
    "msar_correct",
    "scea",
    "count_ops",
]


@dataclass
class AttentionInput:
    """Per-head query/key/value stacks of shape (H, N, Dh) on a t x f grid."""

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    grid: tuple[int, int]

    def __post_init__(self) -> None:
        self.q = np.asarray(self.q, dtype=np.float64)
        self.k = np.asarray(self.k, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if not (self.q.shape == self.k.shape == self.v.shape) or self.q.ndim != 3:
            raise ShapeError(
                f"q/k/v must share an (H, N, Dh) shape: {self.q.shape}, {self.k.shape}, {self.v.shape}"
            )
        t, f = self.grid
        if t * f != self.q.shape[1]:
            raise ShapeError(f"grid {self.grid} does not tile N={self.q.shape[1]} patches")


@dataclass(frozen=True)
class OpCount:
    mhsa_ops: int
    tmsa_ops: int


def softmax_attention(ain: AttentionInput, scale: float | None = None) -> np.ndarray:
    """Exact softmax attention; reference oracle, clarity over speed."""
    q, k, v = ain.q, ain.k, ain.v
    h, n, dh = q.shape
    if scale is None:
        scale = 1.0 / np.sqrt(dh)
    logits = np.einsum("hid,hjd->hij", q, k) * scale
    weights = softmax(logits, axis=-1)
    add_macs(2 * h * n * n * dh)
    return np.einsum("hij,hjd->hid", weights, v)


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.maximum(norms, 1e-30)


def taylor_attention(ain: AttentionInput, normalize: bool = True) -> np.ndarray:
    """First-order Taylor attention in linearized (O(N)) form.

    Weights are 1 + q_i . k_j; rows of q and k are L2-normalized first so
    every weight is non-negative. The N x N weight matrix is never formed.
    """
    q, k, v = ain.q, ain.k, ain.v
    h, n, dh = q.shape
    if normalize:
        q = _normalize_rows(q)
        k = _normalize_rows(k)
    k_sum = k.sum(axis=1)                      # (H, Dh)
    v_sum = v.sum(axis=1)                      # (H, Dh)
    kv = np.einsum("hjd,hje->hde", k, v)       # (H, Dh, Dh)
    num = v_sum[:, None, :] + np.einsum("hid,hde->hie", q, kv)
    den = n + q @ k_sum[:, :, None]            # (H, N, 1)
    if den.min() < 1e-6:
        raise DegenerateAttentionError(
            f"Taylor denominator {den.min():.3e} below 1e-6 (keys antipodal to query)"
        )
    add_macs(2 * h * n * dh * dh + 2 * h * n * dh)
    return num / den


def msar_correct(ain: AttentionInput, vprime: np.ndarray, params) -> np.ndarray:
    """Gated local correction V'' = V' + g * L for the dropped Taylor remainder.

    L is a depthwise 3x3 convolution of V on the t x f grid; the gate g is a
    sigmoid-activated pointwise convolution of the concatenated Q and K maps.
    """
    t, f = ain.grid
    h, n, dh = ain.v.shape
    c = h * dh

    def to_map(x: np.ndarray) -> np.ndarray:
        # (H, N, Dh) -> (1, H*Dh, t, f), head-major channel layout
        return x.transpose(0, 2, 1).reshape(1, c, t, f)

    v_map = to_map(ain.v)
    local = conv2d(v_map, params["local.w"], params["local.b"],
                   ConvSpec(kernel=(3, 3), groups=c, padding=(1, 1)))
    qk = np.concatenate([to_map(ain.q), to_map(ain.k)], axis=1)
    gate = sigmoid(conv2d(qk, params["gate.w"], params["gate.b"], ConvSpec(kernel=(1, 1))))
    corr = (gate * local).reshape(h, dh, n).transpose(0, 2, 1)
    return vprime + corr


def scea(x: np.ndarray, params) -> np.ndarray:
    """Spatial-channel enhancement attention gate.

    Channel branch: global average pool over (T, F), 1-D convolution of
    kernel 3 across channels, sigmoid. Spatial branch: mean+max pool across
    channels, 5x5 convolution, sigmoid. Both gates scale the input.
    """
    if x.ndim != 4:
        raise ShapeError(f"scea expects (B, C, T, F), got shape {x.shape}")
    b, c, t, f = x.shape
    pooled = x.mean(axis=(2, 3)).reshape(b, 1, c, 1)
    ch = conv2d(pooled, params["ch.w"], params["ch.b"],
                ConvSpec(kernel=(3, 1), padding=(1, 0)))
    gate_ch = sigmoid(ch).reshape(b, c, 1, 1)
    sp_in = np.stack([x.mean(axis=1), x.max(axis=1)], axis=1)
    sp = conv2d(sp_in, params["sp.w"], params["sp.b"],
                ConvSpec(kernel=(5, 5), padding=(2, 2)))
    gate_sp = sigmoid(sp)
    return x * gate_ch * gate_sp


def count_ops(t: int, f: int, d: int) -> OpCount:
    """Closed-form operation counts for standard MHSA and T-MSA."""
    if min(t, f, d) < 1:
        raise ShapeError(f"t, f, D must all be >= 1, got ({t}, {f}, {d})")
    mhsa = 4 * t * f * d * d + 2 * t * t * f * f * d
    tmsa = 18 * t * f * d + 2 * t * f * d * d
    return OpCount(mhsa_ops=mhsa, tmsa_ops=tmsa)
