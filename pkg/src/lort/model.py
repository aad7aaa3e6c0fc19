"""Full enhancement network: feature encoder, deformable embedding,
locally refined Taylor transformer stack with one U-resampling level,
magnitude and phase decoders, and end-to-end waveform enhancement.

All learnable parameters live in a WeightStore under canonical dotted
paths; the same layer objects drive initialization, parameter counting,
and the forward pass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import attention as att
from .arrays import (
    ConvSpec,
    FlopMeter,
    conv2d,
    lsigmoid,
    normalize,
    prelu,
    same_pad,
    silu,
)
from .errors import InvalidParameterError, ShapeError, WeightLookupError
from .local_refine import DlcConfig, lrc_block
from .signal import (
    ComplexSpec,
    MagPhase,
    Waveform,
    compress_magnitude,
    decompose,
    istft,
    stft,
)
from .weights import WeightStore

__all__ = [
    "ModelConfig",
    "ForwardResult",
    "LortModel",
    "build_model",
    "init_weights",
    "init_discriminator",
    "count_params",
    "estimate_flops",
    "estimate_macs",
    "forward",
    "encode",
    "dsdcn_embed",
    "lrtt_block",
]

LSIGMOID_BETA = 2.0
INIT_STD = 0.02


@dataclass(frozen=True)
class ModelConfig:
    n_blocks: int = 4
    channels: int = 16
    fft_len: int = 510
    win_len: int = 510
    hop: int = 100
    densenet_depth: int = 4
    densenet_dilations: tuple[int, ...] = (1, 2, 4, 8)
    dlc: DlcConfig = field(default_factory=DlcConfig)
    heads: int = 4
    block_channel_mult: int = 3
    loss_weights: tuple[float, float, float, float, float] = (0.1, 0.9, 0.3, 0.1, 0.05)
    mag_compression: float = 1.0
    sample_rate: int = 16000

    def __post_init__(self) -> None:
        if self.n_blocks < 1:
            raise InvalidParameterError(f"n_blocks must be >= 1, got {self.n_blocks}")
        if self.channels < 2 or self.channels % 2:
            raise InvalidParameterError(f"channels must be even and >= 2, got {self.channels}")
        dil = self.densenet_dilations
        if len(dil) != self.densenet_depth:
            raise InvalidParameterError("densenet_dilations length must equal densenet_depth")
        for a, b in zip(dil, dil[1:]):
            if b <= a:
                raise InvalidParameterError(f"dilations must be strictly increasing, got {dil}")
        if any(d & (d - 1) for d in dil):
            raise InvalidParameterError(f"dilations must be powers of two, got {dil}")
        if self.block_channels % self.heads:
            raise InvalidParameterError(
                f"block channels {self.block_channels} not divisible by {self.heads} heads"
            )

    @property
    def freq_bins(self) -> int:
        return self.fft_len // 2 + 1

    @property
    def enc_bins(self) -> int:
        return math.ceil(self.freq_bins / 2)

    @property
    def block_channels(self) -> int:
        return self.channels * self.block_channel_mult


@dataclass
class ForwardResult:
    wave: Waveform
    spec: ComplexSpec
    mask: np.ndarray
    phase: np.ndarray


# ---------------------------------------------------------------------------
# Layer primitives (declaration + application share one object)

class Conv:
    def __init__(self, name, cin, cout, kernel, stride=(1, 1), dilation=(1, 1),
                 groups=1, padding=None, transposed=False, out_pad=(0, 0), init="gauss"):
        if padding is None:
            padding = same_pad(kernel, dilation)
        self.name = name
        self.cin, self.cout, self.groups = cin, cout, groups
        self.init = init
        self.spec = ConvSpec(kernel=kernel, stride=stride, dilation=dilation,
                             groups=groups, padding=padding, transposed=transposed,
                             out_pad=out_pad)

    def manifest(self):
        k = self.spec.kernel
        if self.spec.transposed:
            wshape = (self.cin, self.cout // self.groups, *k)
        else:
            wshape = (self.cout, self.cin // self.groups, *k)
        yield (f"{self.name}.w", wshape, self.init)
        yield (f"{self.name}.b", (self.cout,), "zeros")

    def __call__(self, ws, x):
        return conv2d(x, ws[f"{self.name}.w"], ws[f"{self.name}.b"], self.spec)


class Norm:
    def __init__(self, name, channels, kind):
        self.name, self.channels, self.kind = name, channels, kind

    def manifest(self):
        yield (f"{self.name}.gain", (self.channels,), "ones")
        yield (f"{self.name}.shift", (self.channels,), "zeros")

    def __call__(self, ws, x):
        return normalize(x, self.kind, ws[f"{self.name}.gain"], ws[f"{self.name}.shift"])


class PRelu:
    def __init__(self, name, channels):
        self.name, self.channels = name, channels

    def manifest(self):
        yield (f"{self.name}.a", (self.channels,), "prelu")

    def __call__(self, ws, x):
        return prelu(x, ws[f"{self.name}.a"])


def _manifest_of(*layers):
    for layer in layers:
        yield from layer.manifest()


def _fit(x: np.ndarray, t: int, f: int) -> np.ndarray:
    """Crop or zero-pad trailing rows/cols to the target (T, F) extents."""
    x = x[:, :, :t, :f]
    pt, pf = t - x.shape[2], f - x.shape[3]
    if pt or pf:
        x = np.pad(x, ((0, 0), (0, 0), (0, pt), (0, pf)))
    return x


# ---------------------------------------------------------------------------
# Composites

class DenseNet:
    """Densely connected dilated 3x3 convolution stack (C channels kept)."""

    def __init__(self, prefix, channels, depth, dilations):
        self.layers = []
        for j in range(depth):
            d = dilations[j]
            self.layers.append((
                Conv(f"{prefix}.layer{j}.conv", channels * (j + 1), channels,
                     (3, 3), dilation=(d, d)),
                Norm(f"{prefix}.layer{j}.norm", channels, "instance"),
                PRelu(f"{prefix}.layer{j}.act", channels),
            ))

    def manifest(self):
        for conv, norm, act in self.layers:
            yield from _manifest_of(conv, norm, act)

    def __call__(self, ws, x, use_norm=True):
        feats = [x]
        z = x
        for conv, norm, act in self.layers:
            cat = np.concatenate(feats, axis=1) if len(feats) > 1 else feats[0]
            z = conv(ws, cat)
            if use_norm:
                z = norm(ws, z)
            z = act(ws, z)
            feats.append(z)
        return z


class Encoder:
    def __init__(self, cfg: ModelConfig):
        c = cfg.channels
        self.in_conv = Conv("encoder.in_conv", 2, c, (1, 1))
        self.dense = DenseNet("encoder.dense", c, cfg.densenet_depth, cfg.densenet_dilations)
        self.down_f = Conv("encoder.down_f", c, c, (1, 3), stride=(1, 2), padding=(0, 1))

    def manifest(self):
        yield from _manifest_of(self.in_conv, self.dense, self.down_f)

    def __call__(self, ws, x):
        return self.down_f(ws, self.dense(ws, self.in_conv(ws, x)))


class Dsdcn:
    """Depthwise-separable convolution with learned bilinear sampling offsets."""

    K = 3

    def __init__(self, prefix, channels):
        k2 = self.K * self.K
        self.channels = channels
        self.offset = Conv(f"{prefix}.offset", channels, 2 * k2, (3, 3), init="zeros")
        self.dw = Conv(f"{prefix}.depthwise", channels, channels, (3, 3), groups=channels)
        self.pw = Conv(f"{prefix}.pointwise", channels, channels, (1, 1))
        self.prefix = prefix

    def manifest(self):
        yield from _manifest_of(self.offset, self.dw, self.pw)

    @staticmethod
    def _bilinear(plane: np.ndarray, pt: np.ndarray, pf: np.ndarray) -> np.ndarray:
        """Sample (C, T, F) plane at fractional coords with zero padding."""
        c, t, f = plane.shape
        t0 = np.floor(pt).astype(np.int64)
        f0 = np.floor(pf).astype(np.int64)
        wt = pt - t0
        wf = pf - f0
        out = np.zeros((c,) + pt.shape)
        for dt, dwt in ((0, 1.0 - wt), (1, wt)):
            for df, dwf in ((0, 1.0 - wf), (1, wf)):
                ti = t0 + dt
                fi = f0 + df
                valid = (ti >= 0) & (ti < t) & (fi >= 0) & (fi < f)
                tc = np.clip(ti, 0, t - 1)
                fc = np.clip(fi, 0, f - 1)
                out += plane[:, tc, fc] * (dwt * dwf * valid)
        return out

    def __call__(self, ws, x):
        b, c, t, f = x.shape
        k = self.K
        off = self.offset(ws, x).reshape(b, k * k, 2, t, f)
        wdw = ws[f"{self.prefix}.depthwise.w"]  # (C, 1, 3, 3)
        bdw = ws[f"{self.prefix}.depthwise.b"]
        gt, gf = np.meshgrid(np.arange(t, dtype=np.float64),
                             np.arange(f, dtype=np.float64), indexing="ij")
        out = np.zeros_like(x)
        for bi in range(b):
            acc = np.zeros((c, t, f))
            for m in range(k * k):
                a, cc = divmod(m, k)
                pt = gt + (a - 1) + off[bi, m, 0]
                pf = gf + (cc - 1) + off[bi, m, 1]
                acc += self._bilinear(x[bi], pt, pf) * wdw[:, 0, a, cc][:, None, None]
            out[bi] = acc + bdw[:, None, None]
        return self.pw(ws, out)


class Ffn:
    def __init__(self, prefix, channels):
        self.expand = Conv(f"{prefix}.expand", channels, 2 * channels, (1, 1))
        self.project = Conv(f"{prefix}.project", 2 * channels, channels, (1, 1))

    def manifest(self):
        yield from _manifest_of(self.expand, self.project)

    def __call__(self, ws, x):
        return self.project(ws, silu(self.expand(ws, x)))


class Lrtt:
    """One locally refined Taylor transformer block."""

    def __init__(self, prefix, cfg: ModelConfig):
        c = cfg.block_channels
        self.prefix = prefix
        self.cfg = cfg
        self.ln1 = Norm(f"{prefix}.ln1", c, "layer")
        self.ln2 = Norm(f"{prefix}.ln2", c, "layer")
        self.qkv = {n: Conv(f"{prefix}.tmsa.{n}", c, c, (1, 1)) for n in ("q", "k", "v", "out")}
        self.msar_local = Conv(f"{prefix}.msar.local", c, c, (3, 3), groups=c, init="zeros")
        self.msar_gate = Conv(f"{prefix}.msar.gate", 2 * c, c, (1, 1), init="zeros")
        self.scea_ch = Conv(f"{prefix}.scea.ch", 1, 1, (3, 1), padding=(1, 0))
        self.scea_sp = Conv(f"{prefix}.scea.sp", 2, 1, (5, 5))
        self.ffn = Ffn(f"{prefix}.ffn", c)
        self.lrc = _LrcParams(f"{prefix}.lrc", c, cfg.dlc)

    def manifest(self):
        yield from _manifest_of(self.ln1, *self.qkv.values(), self.msar_local,
                                self.msar_gate, self.scea_ch, self.scea_sp,
                                self.ln2, self.ffn, self.lrc)

    def _attend(self, ws, y):
        b, c, t, f = y.shape
        h = self.cfg.heads
        dh = c // h
        qm, km, vm = (self.qkv[n](ws, y) for n in ("q", "k", "v"))
        out = np.empty_like(y)
        msar = ws.view(f"{self.prefix}.msar")
        for bi in range(b):
            ain = att.AttentionInput(
                qm[bi].reshape(h, dh, t * f).transpose(0, 2, 1),
                km[bi].reshape(h, dh, t * f).transpose(0, 2, 1),
                vm[bi].reshape(h, dh, t * f).transpose(0, 2, 1),
                (t, f),
            )
            vp = att.taylor_attention(ain)
            vpp = att.msar_correct(ain, vp, msar)
            out[bi] = vpp.transpose(0, 2, 1).reshape(c, t, f)
        return self.qkv["out"](ws, out)

    def __call__(self, ws, x):
        y = self.ln1(ws, x)
        x = x + self._attend(ws, y) + att.scea(y, ws.view(f"{self.prefix}.scea"))
        x = x + self.ffn(ws, self.ln2(ws, x))
        return lrc_block(x, self.cfg.dlc, ws.view(f"{self.prefix}.lrc"))


class _LrcParams:
    """Parameter declarations for a locally refined convolution block."""

    def __init__(self, prefix, channels, dlc_cfg: DlcConfig):
        c = channels
        self.children = [
            Norm(f"{prefix}.cfn.ln", c, "layer"),
            Conv(f"{prefix}.cfn.pw", c, c, (1, 1)),
            Conv(f"{prefix}.cfn.dw", c, c, (3, 3), groups=c),
        ]
        for axis in ("dlc_t", "dlc_f"):
            self.children.append(Conv(f"{prefix}.{axis}.pw_in", c, c, (1, 1)))
            self.children.append(Conv(f"{prefix}.{axis}.pw_out", c, c, (1, 1)))
            for j in range(1, dlc_cfg.depth + 1):
                kern = (dlc_cfg.kernel[0], 1) if axis == "dlc_t" else (1, dlc_cfg.kernel[0])
                d = dlc_cfg.layer_dilation(j)
                dil = (d, 1) if axis == "dlc_t" else (1, d)
                base = f"{prefix}.{axis}.layer{j}"
                self.children += [
                    Conv(f"{base}.compress", c * j, c, (1, 1)),
                    Conv(f"{base}.conv", c, c, kern, dilation=dil),
                    Norm(f"{base}.norm", c, "instance"),
                    PRelu(f"{base}.act", c),
                ]

    def manifest(self):
        yield from _manifest_of(*self.children)


class Decoder:
    """Shared decoder trunk: dilated DenseNet then frequency upsampling."""

    def __init__(self, prefix, cfg: ModelConfig):
        c = cfg.channels
        self.dense = DenseNet(f"{prefix}.dense", c, cfg.densenet_depth, cfg.densenet_dilations)
        self.up_f = Conv(f"{prefix}.up_f", c, c, (1, 3), stride=(1, 2),
                         padding=(0, 1), out_pad=(0, 1), transposed=True)

    def manifest(self):
        yield from _manifest_of(self.dense, self.up_f)

    def __call__(self, ws, x):
        return self.up_f(ws, self.dense(ws, x))


class MagDecoder(Decoder):
    def __init__(self, cfg: ModelConfig):
        super().__init__("mag_decoder", cfg)
        self.out = Conv("mag_decoder.out", cfg.channels, 1, (1, 1))
        self.bins = cfg.freq_bins

    def manifest(self):
        yield from super().manifest()
        yield from self.out.manifest()
        yield ("mag_decoder.lsigmoid.alpha", (self.bins,), "ones")

    def mask(self, ws, x, t, f):
        logits = _fit(self.out(ws, super().__call__(ws, x)), t, f)
        return lsigmoid(logits[:, 0], ws["mag_decoder.lsigmoid.alpha"], LSIGMOID_BETA)


class PhaseDecoder(Decoder):
    def __init__(self, cfg: ModelConfig):
        super().__init__("phase_decoder", cfg)
        self.out_r = Conv("phase_decoder.out_r", cfg.channels, 1, (1, 1))
        self.out_i = Conv("phase_decoder.out_i", cfg.channels, 1, (1, 1))

    def manifest(self):
        yield from super().manifest()
        yield from _manifest_of(self.out_r, self.out_i)

    def phase(self, ws, x, t, f):
        trunk = super().__call__(ws, x)
        r = _fit(self.out_r(ws, trunk), t, f)[:, 0]
        i = _fit(self.out_i(ws, trunk), t, f)[:, 0]
        ph = np.arctan2(i, r)
        return np.where(ph <= -np.pi, np.pi, ph)


class LortModel:
    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        c, cb = cfg.channels, cfg.block_channels
        self.encoder = Encoder(cfg)
        self.embed = Dsdcn("embed", c)
        self.down = Conv("down", c, cb, (2, 2), stride=(2, 2), padding=(0, 0))
        self.blocks = [Lrtt(f"block{i}", cfg) for i in range(cfg.n_blocks)]
        self.up = Conv("up", cb, c, (2, 2), stride=(2, 2), padding=(0, 0), transposed=True)
        self.mag_dec = MagDecoder(cfg)
        self.phase_dec = PhaseDecoder(cfg)

    def manifest(self):
        yield from _manifest_of(self.encoder, self.embed, self.down, *self.blocks,
                                self.up, self.mag_dec, self.phase_dec)

    def param_names(self):
        return [name for name, _, _ in self.manifest()]

    # -- forward ------------------------------------------------------------

    def features(self, spec: ComplexSpec) -> tuple[np.ndarray, MagPhase]:
        mp = decompose(spec)
        mag = compress_magnitude(mp.mag, self.cfg.mag_compression)
        return np.stack([mag, mp.phase])[None], mp

    def trunk(self, ws, feat: np.ndarray) -> np.ndarray:
        """Encoder through transformer stack back to (B, C, T, enc_bins)."""
        enc = self.encoder(ws, feat)
        skip = self.embed(ws, enc)
        h = self.down(ws, skip)
        for block in self.blocks:
            h = block(ws, h)
        h = _fit(self.up(ws, h), skip.shape[2], skip.shape[3])
        if h.shape != skip.shape:
            raise ShapeError(f"skip join mismatch: {h.shape} vs {skip.shape}")
        return h + skip

    def forward(self, noisy: Waveform, ws: WeightStore,
                use_noisy_phase: bool = False) -> ForwardResult:
        missing = ws.missing(self.param_names())
        if missing:
            raise WeightLookupError(f"weight store incomplete; missing {missing[:8]}"
                                    + ("..." if len(missing) > 8 else ""))
        cfg = self.cfg
        spec = stft(noisy, cfg.fft_len, cfg.win_len, cfg.hop)
        feat, mp = self.features(spec)
        t, f = spec.re.shape
        h = self.trunk(ws, feat)
        mask = self.mag_dec.mask(ws, h, t, f)[0]
        phase = mp.phase if use_noisy_phase else self.phase_dec.phase(ws, h, t, f)[0]
        mag = mask * mp.mag
        out_spec = ComplexSpec(mag * np.cos(phase), mag * np.sin(phase),
                               cfg.fft_len, cfg.win_len, cfg.hop, spec.window)
        wave = istft(out_spec, len(noisy))
        wave.sample_rate = noisy.sample_rate
        return ForwardResult(wave=wave, spec=out_spec, mask=mask, phase=phase)


# ---------------------------------------------------------------------------
# Discriminator parameter declarations (applied in objectives.discriminate)

def discriminator_layers(prefix: str = "disc"):
    chans = [2, 16, 32, 32, 32]
    layers = []
    for j in range(4):
        layers += [
            Conv(f"{prefix}.block{j}.conv", chans[j], chans[j + 1], (3, 3),
                 stride=(2, 2), padding=(1, 1)),
            Norm(f"{prefix}.block{j}.norm", chans[j + 1], "instance"),
            PRelu(f"{prefix}.block{j}.act", chans[j + 1]),
        ]
    layers.append(Conv(f"{prefix}.head", chans[-1], 1, (1, 1)))
    return layers


def discriminator_manifest(prefix: str = "disc"):
    yield from _manifest_of(*discriminator_layers(prefix))


# ---------------------------------------------------------------------------
# Module-level conveniences

def build_model(cfg: ModelConfig) -> LortModel:
    return LortModel(cfg)


def _init_into(store: WeightStore, manifest, rng: np.random.Generator) -> WeightStore:
    for name, shape, kind in manifest:
        if kind == "gauss":
            store[name] = rng.normal(0.0, INIT_STD, size=shape)
        elif kind == "zeros":
            store[name] = np.zeros(shape)
        elif kind == "ones":
            store[name] = np.ones(shape)
        elif kind == "prelu":
            store[name] = np.full(shape, 0.25)
        else:
            raise InvalidParameterError(f"unknown init kind {kind!r}")
    return store


def init_weights(cfg: ModelConfig, seed: int = 0) -> WeightStore:
    """Freshly initialized generator weights (Gaussian convs, inert offsets)."""
    rng = np.random.default_rng(seed)
    return _init_into(WeightStore(), build_model(cfg).manifest(), rng)


def init_discriminator(store: WeightStore, seed: int = 0, prefix: str = "disc") -> WeightStore:
    rng = np.random.default_rng(seed)
    return _init_into(store, discriminator_manifest(prefix), rng)


def zero_weights(cfg: ModelConfig) -> WeightStore:
    """All-zero parameterization (norm gains included), for skeleton tests."""
    store = WeightStore()
    for name, shape, _ in build_model(cfg).manifest():
        store[name] = np.zeros(shape)
    return store


def count_params(cfg: ModelConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape, _ in build_model(cfg).manifest())


def estimate_macs(cfg: ModelConfig, duration_s: float) -> int:
    """Measured multiply-accumulate count of one forward pass."""
    n = int(round(duration_s * cfg.sample_rate))
    model = build_model(cfg)
    ws = init_weights(cfg, seed=0)
    wave = Waveform(np.zeros(n), cfg.sample_rate)
    with FlopMeter() as meter:
        model.forward(wave, ws)
    return meter.macs


def estimate_flops(cfg: ModelConfig, duration_s: float) -> int:
    """FLOPs (2 ops per multiply-accumulate) for the given clip duration."""
    return 2 * estimate_macs(cfg, duration_s)


def forward(noisy: Waveform, ws: WeightStore, cfg: ModelConfig,
            use_noisy_phase: bool = False) -> ForwardResult:
    return build_model(cfg).forward(noisy, ws, use_noisy_phase=use_noisy_phase)


# Standalone views of the network stages (thin wrappers over the model).

def encode(x: np.ndarray, ws: WeightStore, cfg: ModelConfig) -> np.ndarray:
    return Encoder(cfg)(ws, x)


def dsdcn_embed(x: np.ndarray, ws: WeightStore, cfg: ModelConfig,
                prefix: str = "embed") -> np.ndarray:
    return Dsdcn(prefix, x.shape[1])(ws, x)


def lrtt_block(x: np.ndarray, ws: WeightStore, cfg: ModelConfig, i: int) -> np.ndarray:
    return Lrtt(f"block{i}", cfg)(ws, x)
