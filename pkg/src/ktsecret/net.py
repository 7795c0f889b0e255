"""Small convolutional encoder-decoder with hand-written backpropagation.

Complex frames are packed as 2T real channels (T real parts then T imaginary
parts). The network is a two-level U-Net-style encoder-decoder: conv-ReLU
pairs, 2x average pooling down, nearest-neighbor upsampling with skip
concatenation up, a final 1x1 conv back to 2T channels, and a residual path
that adds the temporal-average image of the input to every output frame.

Forward caches every intermediate needed for an exact reverse pass; gradients
are validated against central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NetConfig",
    "NetworkParams",
    "AdamState",
    "init_params",
    "net_forward",
    "net_backward",
    "adam_step",
    "to_channels",
    "to_complex",
]


@dataclass(frozen=True)
class NetConfig:
    frames: int
    depth_levels: int = 2
    base_channels: int = 16

    def __post_init__(self):
        if self.frames < 1 or self.depth_levels < 1 or self.base_channels < 1:
            raise ValueError("frames, depth_levels, base_channels must be >= 1")

    @property
    def io_channels(self) -> int:
        return 2 * self.frames


@dataclass
class ConvLayer:
    kind: str  # "conv3" or "conv1"
    weight: np.ndarray  # [out_ch, in_ch, k, k]
    bias: np.ndarray  # [out_ch]


class NetworkParams:
    """Ordered conv layers with a contiguous flat parameter view."""

    def __init__(self, layers):
        self.layers = list(layers)

    @property
    def size(self) -> int:
        return sum(l.weight.size + l.bias.size for l in self.layers)

    def to_flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([l.weight.ravel(), l.bias]) for l in self.layers])

    def from_flat(self, flat: np.ndarray) -> "NetworkParams":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.size:
            raise ValueError(f"flat vector length {flat.size} != parameter count {self.size}")
        out, i = [], 0
        for l in self.layers:
            w = flat[i:i + l.weight.size].reshape(l.weight.shape)
            i += l.weight.size
            b = flat[i:i + l.bias.size].copy()
            i += l.bias.size
            out.append(ConvLayer(l.kind, w, b))
        return NetworkParams(out)

    def scaled(self, factor: float) -> "NetworkParams":
        return self.from_flat(self.to_flat() * factor)


def _layer_shapes(cfg: NetConfig):
    """(kind, in_ch, out_ch) per layer, in execution order."""
    shapes = []
    ch_in = cfg.io_channels
    enc_ch = []
    for lvl in range(cfg.depth_levels):
        ch = cfg.base_channels * 2 ** lvl
        shapes.append(("conv3", ch_in, ch))
        shapes.append(("conv3", ch, ch))
        enc_ch.append(ch)
        ch_in = ch
    bott = cfg.base_channels * 2 ** cfg.depth_levels
    shapes.append(("conv3", ch_in, bott))
    shapes.append(("conv3", bott, bott))
    ch_in = bott
    for lvl in reversed(range(cfg.depth_levels)):
        ch = enc_ch[lvl]
        shapes.append(("conv3", ch_in + ch, ch))
        shapes.append(("conv3", ch, ch))
        ch_in = ch
    shapes.append(("conv1", ch_in, cfg.io_channels))
    return shapes


def init_params(cfg: NetConfig, seed: int) -> NetworkParams:
    """He-uniform weights, zero biases, deterministic per seed."""
    rng = np.random.default_rng(seed)
    layers = []
    for kind, cin, cout in _layer_shapes(cfg):
        k = 3 if kind == "conv3" else 1
        limit = np.sqrt(6.0 / (cin * k * k))
        w = rng.uniform(-limit, limit, size=(cout, cin, k, k))
        layers.append(ConvLayer(kind, w, np.zeros(cout)))
    return NetworkParams(layers)


def to_channels(s: np.ndarray) -> np.ndarray:
    """Complex [T,H,W] -> real [2T,H,W] (real parts first)."""
    s = np.asarray(s, dtype=np.complex128)
    return np.concatenate([s.real, s.imag], axis=0)


def to_complex(x: np.ndarray) -> np.ndarray:
    """Real [2T,H,W] -> complex [T,H,W]."""
    t = x.shape[0] // 2
    return x[:t] + 1j * x[t:]


def _conv3_forward(x, w, b):
    cin, h, wd = x.shape
    cout = w.shape[0]
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    y = np.empty((cout, h, wd))
    y[:] = b[:, None, None]
    for dy in range(3):
        for dx in range(3):
            y += np.einsum("oi,ihw->ohw", w[:, :, dy, dx], xp[:, dy:dy + h, dx:dx + wd])
    return y


def _conv3_backward(gy, x, w):
    cin, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    gw = np.zeros_like(w)
    gxp = np.zeros_like(xp)
    for dy in range(3):
        for dx in range(3):
            patch = xp[:, dy:dy + h, dx:dx + wd]
            gw[:, :, dy, dx] = np.einsum("ohw,ihw->oi", gy, patch)
            gxp[:, dy:dy + h, dx:dx + wd] += np.einsum("oi,ohw->ihw", w[:, :, dy, dx], gy)
    return gw, gy.sum(axis=(1, 2)), gxp[:, 1:h + 1, 1:wd + 1]


def _conv1_forward(x, w, b):
    return np.einsum("oi,ihw->ohw", w[:, :, 0, 0], x) + b[:, None, None]


def _conv1_backward(gy, x, w):
    gw = np.einsum("ohw,ihw->oi", gy, x)[:, :, None, None]
    gx = np.einsum("oi,ohw->ihw", w[:, :, 0, 0], gy)
    return gw, gy.sum(axis=(1, 2)), gx


def _plan(cfg: NetConfig):
    """Op tape executed by forward and replayed in reverse by backward."""
    ops = []
    li = 0
    for lvl in range(cfg.depth_levels):
        ops += [("conv", li), ("relu",), ("conv", li + 1), ("relu",), ("skip", lvl), ("pool",)]
        li += 2
    ops += [("conv", li), ("relu",), ("conv", li + 1), ("relu",)]
    li += 2
    for lvl in reversed(range(cfg.depth_levels)):
        ops += [("up",), ("concat", lvl), ("conv", li), ("relu",), ("conv", li + 1)]
        li += 2
    ops += [("conv", li)]
    return ops


def net_forward(s_u: np.ndarray, params: NetworkParams, cfg: NetConfig):
    """Run the network on a complex [T,H,W] series; returns (output, cache)."""
    t, h, w = s_u.shape
    if t != cfg.frames:
        raise ValueError(f"series has {t} frames, config expects {cfg.frames}")
    if h % 2 ** cfg.depth_levels or w % 2 ** cfg.depth_levels:
        raise ValueError(f"H,W must be divisible by {2 ** cfg.depth_levels}")
    x = to_channels(s_u)
    skips = {}
    tape = []  # (op, input array) per executed op
    for op in _plan(cfg):
        tape.append((op, x))
        if op[0] == "conv":
            layer = params.layers[op[1]]
            fwd = _conv3_forward if layer.kind == "conv3" else _conv1_forward
            x = fwd(x, layer.weight, layer.bias)
        elif op[0] == "relu":
            x = np.maximum(x, 0.0)
        elif op[0] == "pool":
            c, hh, ww = x.shape
            x = x.reshape(c, hh // 2, 2, ww // 2, 2).mean(axis=(2, 4))
        elif op[0] == "up":
            x = np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)
        elif op[0] == "skip":
            skips[op[1]] = x
        elif op[0] == "concat":
            x = np.concatenate([skips[op[1]], x], axis=0)
    avg = s_u.mean(axis=0)
    out = to_complex(x) + avg[None, :, :]
    cache = {"tape": tape, "skips": skips, "cfg": cfg, "shape": s_u.shape}
    return out, cache


def net_backward(grad_out: np.ndarray, cache, params: NetworkParams):
    """Exact reverse pass; returns (flat parameter gradient, input gradient).

    grad_out is complex [T,H,W] holding dL/d(real part) + i*dL/d(imag part)
    of the network output; the returned input gradient uses the same packing.
    """
    cfg: NetConfig = cache["cfg"]
    t = cfg.frames
    gx = to_channels(grad_out)
    grads = {i: (np.zeros_like(l.weight), np.zeros_like(l.bias)) for i, l in enumerate(params.layers)}
    gskips = {lvl: None for lvl in range(cfg.depth_levels)}
    for op, x_in in reversed(cache["tape"]):
        if op[0] == "conv":
            layer = params.layers[op[1]]
            bwd = _conv3_backward if layer.kind == "conv3" else _conv1_backward
            gw, gb, gx = bwd(gx, x_in, layer.weight)
            grads[op[1]] = (grads[op[1]][0] + gw, grads[op[1]][1] + gb)
        elif op[0] == "relu":
            gx = gx * (x_in > 0)
        elif op[0] == "pool":
            gx = np.repeat(np.repeat(gx, 2, axis=1), 2, axis=2) / 4.0
        elif op[0] == "up":
            c, hh, ww = x_in.shape
            gx = gx.reshape(c, hh, 2, ww, 2).sum(axis=(2, 4))
        elif op[0] == "skip":
            gx = gx + gskips[op[1]]
        elif op[0] == "concat":
            c_skip = cache["skips"][op[1]].shape[0]
            gskips[op[1]] = gx[:c_skip]
            gx = gx[c_skip:]
    # residual path: every output frame sees the temporal average of the input
    g_residual = grad_out.sum(axis=0) / t
    grad_in = to_complex(gx) + g_residual[None, :, :]
    flat = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads.values()])
    return flat, grad_in


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), step=0)


def adam_step(theta: np.ndarray, grad: np.ndarray, state: AdamState,
              lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8):
    """One bias-corrected Adam update on flat parameter vectors."""
    if theta.shape != grad.shape or theta.shape != state.m.shape:
        raise ValueError("theta, grad and state shapes must agree")
    step = state.step + 1
    m = beta1 * state.m + (1 - beta1) * grad
    v = beta2 * state.v + (1 - beta2) * grad ** 2
    m_hat = m / (1 - beta1 ** step)
    v_hat = v / (1 - beta2 ** step)
    theta_new = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
    return theta_new, AdamState(m=m, v=v, step=step)
