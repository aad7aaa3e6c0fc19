"""Dense-array numeric kernel: convolutions, normalization, activations.

Everything operates on plain numpy arrays (rank <= 4, row-major). All
functions are pure; verification paths run in float64.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, InvalidSpecError, ShapeError

__all__ = [
    "ConvSpec",
    "FlopMeter",
    "add_macs",
    "conv2d",
    "same_pad",
    "normalize",
    "prelu",
    "silu",
    "sigmoid",
    "lsigmoid",
    "softmax",
]

# Cap on elements of a single im2col temporary (keeps peak memory bounded).
_CHUNK_ELEMS = 8_000_000


# ---------------------------------------------------------------------------
# FLOP accounting

_active_meters: list["FlopMeter"] = []


class FlopMeter:
    """Context manager accumulating multiply-accumulate counts."""

    def __init__(self) -> None:
        self.macs = 0

    def __enter__(self) -> "FlopMeter":
        _active_meters.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _active_meters.remove(self)

    @property
    def flops(self) -> int:
        """FLOPs under the 2-ops-per-MAC convention."""
        return 2 * self.macs


def add_macs(n: int) -> None:
    for m in _active_meters:
        m.macs += int(n)


# ---------------------------------------------------------------------------
# Convolution

@dataclass(frozen=True)
class ConvSpec:
    kernel: tuple[int, int]
    stride: tuple[int, int] = (1, 1)
    dilation: tuple[int, int] = (1, 1)
    groups: int = 1
    padding: tuple[int, int] = (0, 0)
    transposed: bool = False
    out_pad: tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        if min(self.kernel) < 1 or min(self.stride) < 1:
            raise InvalidSpecError(f"kernel/stride must be >= 1, got {self}")
        if min(self.dilation) < 1:
            raise InvalidSpecError(f"dilation must be >= 1 componentwise, got {self.dilation}")
        if self.groups < 1:
            raise InvalidSpecError(f"groups must be positive, got {self.groups}")
        if min(self.padding) < 0 or min(self.out_pad) < 0:
            raise InvalidSpecError(f"padding must be non-negative, got {self}")


def same_pad(kernel: tuple[int, int], dilation: tuple[int, int] = (1, 1)) -> tuple[int, int]:
    """Padding that preserves spatial extent at stride 1 (odd kernels)."""
    return (dilation[0] * (kernel[0] - 1) // 2, dilation[1] * (kernel[1] - 1) // 2)


def _windows(xp: np.ndarray, kernel, stride, dilation) -> np.ndarray:
    """Strided view of shape (B, C, Ho, Wo, kh, kw); no copy."""
    kh, kw = kernel
    dh, dw = dilation
    eh = dh * (kh - 1) + 1
    ew = dw * (kw - 1) + 1
    if xp.shape[2] < eh or xp.shape[3] < ew:
        raise InvalidSpecError(
            f"effective kernel ({eh}, {ew}) exceeds padded input {xp.shape[2:]}"
        )
    sw = np.lib.stride_tricks.sliding_window_view(xp, (eh, ew), axis=(2, 3))
    return sw[:, :, :: stride[0], :: stride[1], ::dh, ::dw]


def _conv_group(x: np.ndarray, w: np.ndarray, stride, dilation, padding) -> np.ndarray:
    """Single-group cross-correlation via chunked window contraction."""
    ph, pw = padding
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    win = _windows(xp, w.shape[2:], stride, dilation)
    b_, c, ho, wo, kh, kw = win.shape
    out = np.empty((b_, ho, wo, w.shape[0]), dtype=x.dtype)
    row_elems = max(1, b_ * wo * c * kh * kw)
    step = max(1, _CHUNK_ELEMS // row_elems)
    for h0 in range(0, ho, step):
        h1 = min(h0 + step, ho)
        block = win[:, :, h0:h1]
        out[:, h0:h1] = np.tensordot(block, w, axes=([1, 4, 5], [1, 2, 3]))
    return np.moveaxis(out, 3, 1)


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None, spec: ConvSpec) -> np.ndarray:
    """2-D cross-correlation with stride, dilation, groups and transposition.

    Plain weights have shape (Cout, Cin/groups, kh, kw); transposed
    weights use (Cin, Cout/groups, kh, kw).
    """
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects a (B, C, H, W) input, got shape {x.shape}")
    if w.ndim != 4 or w.shape[2:] != tuple(spec.kernel):
        raise ShapeError(f"weight shape {w.shape} does not match kernel {spec.kernel}")
    if spec.transposed:
        return _conv_transposed(x, w, b, spec)

    cout, cin_g = w.shape[:2]
    g = spec.groups
    if x.shape[1] != cin_g * g or cout % g:
        raise ShapeError(
            f"channels {x.shape[1]} inconsistent with weight {w.shape} and groups {g}"
        )
    cout_g = cout // g
    if g == 1:
        out = _conv_group(x, w, spec.stride, spec.dilation, spec.padding)
    else:
        parts = [
            _conv_group(
                x[:, i * cin_g : (i + 1) * cin_g],
                w[i * cout_g : (i + 1) * cout_g],
                spec.stride,
                spec.dilation,
                spec.padding,
            )
            for i in range(g)
        ]
        out = np.concatenate(parts, axis=1)
    if out.shape[2] == 0 or out.shape[3] == 0:
        raise InvalidSpecError(f"zero-sized output {out.shape} for spec {spec}")
    add_macs(out.size * cin_g * spec.kernel[0] * spec.kernel[1])
    if b is not None:
        if b.shape != (cout,):
            raise ShapeError(f"bias shape {b.shape} != ({cout},)")
        out = out + b.reshape(1, cout, 1, 1)
    return out


def _conv_transposed(x: np.ndarray, w: np.ndarray, b: np.ndarray | None, spec: ConvSpec) -> np.ndarray:
    cin, cout_g = w.shape[:2]
    g = spec.groups
    if x.shape[1] != cin or cin % g:
        raise ShapeError(
            f"channels {x.shape[1]} inconsistent with transposed weight {w.shape} and groups {g}"
        )
    cin_g = cin // g
    sh, sw_ = spec.stride
    dh, dw = spec.dilation
    kh, kw = spec.kernel
    parts = []
    for i in range(g):
        xg = x[:, i * cin_g : (i + 1) * cin_g]
        wg = w[i * cin_g : (i + 1) * cin_g]
        b_, c, h, wid = xg.shape
        xi = np.zeros(
            (b_, c, (h - 1) * sh + 1 + spec.out_pad[0], (wid - 1) * sw_ + 1 + spec.out_pad[1]),
            dtype=x.dtype,
        )
        xi[:, :, :: sh, :: sw_][:, :, :h, :wid] = xg
        # gradient-of-conv form: full correlation with the flipped kernel
        pe_h = dh * (kh - 1) - spec.padding[0]
        pe_w = dw * (kw - 1) - spec.padding[1]
        wf = wg[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        out = _conv_group(
            np.pad(
                xi,
                (
                    (0, 0),
                    (0, 0),
                    (max(pe_h, 0), max(pe_h, 0)),
                    (max(pe_w, 0), max(pe_w, 0)),
                ),
            ),
            wf,
            (1, 1),
            spec.dilation,
            (0, 0),
        )
        ch = max(-pe_h, 0)
        cw = max(-pe_w, 0)
        if ch or cw:
            out = out[:, :, ch : out.shape[2] - ch or None, cw : out.shape[3] - cw or None]
        parts.append(out)
    out = np.concatenate(parts, axis=1) if g > 1 else parts[0]
    if out.shape[2] == 0 or out.shape[3] == 0:
        raise InvalidSpecError(f"zero-sized output {out.shape} for spec {spec}")
    add_macs(x.size * cout_g * kh * kw)
    if b is not None:
        cout = cout_g * g
        if b.shape != (cout,):
            raise ShapeError(f"bias shape {b.shape} != ({cout},)")
        out = out + b.reshape(1, -1, 1, 1)
    return out


def conv_out_shape(in_shape: tuple[int, int], spec: ConvSpec) -> tuple[int, int]:
    """Spatial output extents for an input of spatial shape (H, W)."""
    out = []
    for i in range(2):
        n, k, s, d, p = in_shape[i], spec.kernel[i], spec.stride[i], spec.dilation[i], spec.padding[i]
        if spec.transposed:
            out.append((n - 1) * s - 2 * p + d * (k - 1) + 1 + spec.out_pad[i])
        else:
            out.append((n + 2 * p - d * (k - 1) - 1) // s + 1)
    if min(out) < 1:
        raise InvalidSpecError(f"zero-sized output {out} for spec {spec}")
    return tuple(out)


# ---------------------------------------------------------------------------
# Normalization

def _bcast(p: np.ndarray, ndim: int) -> np.ndarray:
    """Reshape a per-channel (C,) parameter for (B, C, ...) broadcasting."""
    p = np.asarray(p)
    if p.ndim == 1 and ndim > 2:
        return p.reshape((1, -1) + (1,) * (ndim - 2))
    return p


def normalize(x: np.ndarray, kind: str, gain, shift, eps: float = 1e-5) -> np.ndarray:
    """Layer norm (over all non-batch axes) or instance norm (over T, F)."""
    if eps <= 0:
        raise InvalidParameterError(f"eps must be positive, got {eps}")
    if kind == "layer":
        axes = tuple(range(1, x.ndim))
    elif kind == "instance":
        if x.ndim != 4:
            raise ShapeError(f"instance norm expects (B, C, T, F), got shape {x.shape}")
        axes = (2, 3)
    else:
        raise InvalidParameterError(f"unknown normalization kind {kind!r}")
    mu = x.mean(axis=axes, keepdims=True)
    var = x.var(axis=axes, keepdims=True)
    y = (x - mu) / np.sqrt(var + eps)
    return y * _bcast(gain, x.ndim) + _bcast(shift, x.ndim)


# ---------------------------------------------------------------------------
# Activations

def sigmoid(x: np.ndarray) -> np.ndarray:
    z = np.asarray(x)
    if z.dtype.kind != "f":
        z = z.astype(np.float64)
    # clip keeps exp finite; saturation is exact at double precision anyway
    z = np.clip(z, -709.0, 709.0)
    return 1.0 / (1.0 + np.exp(-z))


def silu(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def prelu(x: np.ndarray, a) -> np.ndarray:
    """x for x >= 0, a*x otherwise; `a` scalar or per-channel."""
    a = _bcast(np.asarray(a, dtype=x.dtype), x.ndim)
    return np.where(x >= 0, x, a * x)


def lsigmoid(x: np.ndarray, alpha: np.ndarray, beta: float = 2.0) -> np.ndarray:
    """Learnable sigmoid beta * sigma(alpha * x); alpha is per frequency bin."""
    if beta <= 0:
        raise InvalidParameterError(f"beta must be positive, got {beta}")
    alpha = np.asarray(alpha)
    if alpha.ndim != 1 or alpha.shape[0] != x.shape[-1]:
        raise ShapeError(
            f"lsigmoid needs one alpha per frequency bin: alpha {alpha.shape}, input {x.shape}"
        )
    return beta * sigmoid(alpha * x)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)
