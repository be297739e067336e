"""Layer forward/backward passes and the declarative layer description.

Conventions, fixed package-wide:

- 1-D feature maps have shape (channels, time); 2-D maps (channels, height,
  width).  The raw input waveform enters as (1, 8000).
- Convolution means cross-correlation (no kernel flip).
- conv1d weights: (out_ch, in_ch, k); conv2d: (out_ch, in_ch, kh, kw);
  bias: (out_ch,).
- Output extent per spatial axis: n = floor((T_padded - k) / stride) + 1.
  "same" padding pads so that n = ceil(T / stride), with the extra sample
  on the right when the total is odd.  Pooling never pads.
- ``forward(x, cache=True)`` must precede ``backward(upstream)``; backward
  returns the gradient w.r.t. the input and leaves parameter gradients in
  ``self.grads``.  Caches are not retained when ``cache=False`` (inference).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .optim import glorot_init
from .tensor import ShapeError

VALID = "valid"
SAME = "same"


@dataclass
class LayerSpec:
    """Declarative description of one layer; the architecture is data."""

    kind: str                       # conv1d, conv2d, maxpool1d, maxpool2d, relu,
                                    # inception_nucleus, reshape_channels_first,
                                    # class_head, flatten, dense
    channels: int | None = None     # conv/dense output channels
    kernel: tuple[int, ...] | None = None
    stride: tuple[int, ...] | None = None
    padding: str = VALID
    branches: list[list["LayerSpec"]] = field(default_factory=list)

    def __post_init__(self):
        if self.channels is not None and self.channels < 1:
            raise ShapeError(f"channels must be >= 1, got {self.channels}")
        for ext in (self.kernel or ()) + (self.stride or ()):
            if ext < 1:
                raise ShapeError(f"kernel/stride extents must be >= 1, got {ext}")
        if self.padding not in (VALID, SAME):
            raise ShapeError(f"unknown padding {self.padding!r}")


def conv_out_len(size: int, kernel: int, stride: int, padding: str) -> int:
    """n = floor((T_padded - k) / s) + 1; same padding yields ceil(T / s)."""
    if padding == SAME:
        return -(-size // stride)
    if size < kernel:
        raise ShapeError(f"extent {size} smaller than kernel {kernel} under valid padding")
    return (size - kernel) // stride + 1


def same_pad_amounts(size: int, kernel: int, stride: int) -> tuple[int, int]:
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2


class Layer:
    """Base class; subclasses fill params/grads when they carry weights."""

    name = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x: np.ndarray, cache: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        """Analytic shape propagation, no data involved."""
        raise NotImplementedError

    def param_owners(self) -> list["Layer"]:
        return [self] if self.params else []

    def _take_cache(self):
        if self._cache is None:
            raise RuntimeError(f"{self.name}: backward() without a cached forward()")
        cache, self._cache = self._cache, None
        return cache


def _cols_1d(xp: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """im2col, kernel-major: cols[c*k + j, t] = xp[c, t*stride + j].

    The (C*k, n) layout keeps the materializing copy sequential in the
    source, which dominates conv runtime on long maps.
    """
    ch, size = xp.shape
    n = (size - kernel) // stride + 1
    sc, st = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp, (ch, kernel, n), (sc, st, st * stride), writeable=False)
    return win.reshape(ch * kernel, n)


def _cols_2d(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    """im2col, kernel-major: cols[(c*kh + di)*kw + dj, i*nw + j]."""
    ch, h, w = xp.shape
    nh = (h - kh) // sh + 1
    nw = (w - kw) // sw + 1
    sc, srh, srw = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp, (ch, kh, kw, nh, nw), (sc, srh, srw, srh * sh, srw * sw), writeable=False)
    return win.reshape(ch * kh * kw, nh * nw)


class Conv1D(Layer):
    """Strided 1-D cross-correlation over (in_ch, T) maps.

    out[c, t] = bias[c] + sum_{i,j} w[c, i, j] * x_padded[i, t*stride + j]
    """

    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int,
                 padding: str, rng: np.random.Generator, dtype, name: str = "conv1d"):
        super().__init__()
        self.name = name
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride, self.padding = kernel, stride, padding
        fan = in_ch * kernel, out_ch * kernel
        self.params["weight"] = glorot_init((out_ch, in_ch, kernel), *fan, rng, dtype)
        self.params["bias"] = np.zeros(out_ch, dtype=dtype)

    def out_shape(self, in_shape):
        if len(in_shape) != 2 or in_shape[0] != self.in_ch:
            raise ShapeError(f"{self.name}: expected ({self.in_ch}, T), got {in_shape}")
        return (self.out_ch, conv_out_len(in_shape[1], self.kernel, self.stride, self.padding))

    def forward(self, x, cache=True):
        self.out_shape(x.shape)  # validates channels and extent
        pl = pr = 0
        if self.padding == SAME:
            pl, pr = same_pad_amounts(x.shape[1], self.kernel, self.stride)
        xp = np.pad(x, ((0, 0), (pl, pr))) if pl or pr else x
        cols = _cols_1d(xp, self.kernel, self.stride)
        w_mat = self.params["weight"].reshape(self.out_ch, -1)
        out = w_mat @ cols
        out += self.params["bias"][:, None]
        if cache:
            self._cache = (cols, x.shape[1], xp.shape[1], pl)
        return out

    def backward(self, upstream):
        cols, t_in, t_pad, pl = self._take_cache()
        n = upstream.shape[1]
        w_mat = self.params["weight"].reshape(self.out_ch, -1)
        self.grads["weight"] = (upstream @ cols.T).reshape(self.params["weight"].shape)
        self.grads["bias"] = upstream.sum(axis=1)
        dcols = (w_mat.T @ upstream).reshape(self.in_ch, self.kernel, n)
        dxp = np.zeros((self.in_ch, t_pad), dtype=upstream.dtype)
        s = self.stride
        for j in range(self.kernel):
            dxp[:, j:j + s * (n - 1) + 1:s] += dcols[:, j, :]
        return dxp[:, pl:pl + t_in] if t_pad != t_in else dxp


class Conv2D(Layer):
    """Strided 2-D cross-correlation over (in_ch, H, W) maps.

    Stride-1 convolutions (the only kind the reference architectures use in
    2-D) run as one GEMM per kernel offset over the flattened padded image,
    which avoids materializing im2col columns; strided convolutions fall back
    to the im2col path.
    """

    def __init__(self, in_ch: int, out_ch: int, kernel: tuple[int, int],
                 stride: tuple[int, int], padding: str, rng: np.random.Generator,
                 dtype, name: str = "conv2d"):
        super().__init__()
        self.name = name
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride, self.padding = kernel, stride, padding
        ksz = kernel[0] * kernel[1]
        self.params["weight"] = glorot_init(
            (out_ch, in_ch) + kernel, in_ch * ksz, out_ch * ksz, rng, dtype)
        self.params["bias"] = np.zeros(out_ch, dtype=dtype)
        self._scratch: dict[tuple, np.ndarray] = {}

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.in_ch:
            raise ShapeError(f"{self.name}: expected ({self.in_ch}, H, W), got {in_shape}")
        nh = conv_out_len(in_shape[1], self.kernel[0], self.stride[0], self.padding)
        nw = conv_out_len(in_shape[2], self.kernel[1], self.stride[1], self.padding)
        return (self.out_ch, nh, nw)

    def _buf(self, key, shape, dtype) -> np.ndarray:
        buf = self._scratch.get((key, shape, np.dtype(dtype)))
        if buf is None:
            buf = np.empty(shape, dtype=dtype)
            self._scratch[(key, shape, np.dtype(dtype))] = buf
        return buf

    def _pads(self, in_shape):
        if self.padding != SAME:
            return (0, 0), (0, 0)
        return (same_pad_amounts(in_shape[1], self.kernel[0], self.stride[0]),
                same_pad_amounts(in_shape[2], self.kernel[1], self.stride[1]))

    def forward(self, x, cache=True):
        _, nh, nw = self.out_shape(x.shape)
        # shift-GEMM wants stride 1 and enough input channels per offset to
        # keep the GEMMs off the rank-deficient memory-bound regime
        if self.stride == (1, 1) and self.in_ch * self.kernel[0] * self.kernel[1] > 64:
            return self._forward_shift(x, nh, nw, cache)
        return self._forward_cols(x, nh, nw, cache)

    def backward(self, upstream):
        mode, cache = self._take_cache()
        if mode == "shift":
            return self._backward_shift(upstream, cache)
        return self._backward_cols(upstream, cache)

    # -- stride-1 path: one GEMM per kernel offset on the flat padded image --

    def _forward_shift(self, x, nh, nw, cache):
        (kh, kw) = self.kernel
        (pt, _), (pl, _) = pads = self._pads(x.shape)
        hp, wp = x.shape[1] + sum(pads[0]), x.shape[2] + sum(pads[1])
        # flat padded image with a (kw-1)-zero tail so every shifted GEMM
        # in backward stays in bounds
        xf = self._buf("xf", (self.in_ch, hp * wp + kw - 1), x.dtype)
        xf[:] = 0.0
        xf[:, :hp * wp].reshape(self.in_ch, hp, wp)[:, pt:pt + x.shape[1],
                                                    pl:pl + x.shape[2]] = x
        span = (nh - 1) * wp + nw  # flat span covering all output positions
        acc = self._buf("acc", (self.out_ch, nh * wp), x.dtype)
        tmp = self._buf("tmp", (self.out_ch, span), x.dtype)
        acc[:, :span] = 0.0
        # (kh, kw, out, in) blocks are contiguous, keeping matmul on the
        # BLAS fast path; strided operands fall off it by ~30x
        wk = np.ascontiguousarray(self.params["weight"].transpose(2, 3, 0, 1))
        for di in range(kh):
            for dj in range(kw):
                off = di * wp + dj
                np.matmul(wk[di, dj], xf[:, off:off + span], out=tmp)
                acc[:, :span] += tmp
        out = np.empty((self.out_ch, nh, nw), dtype=x.dtype)
        out[:] = acc.reshape(self.out_ch, nh, wp)[:, :, :nw]
        out += self.params["bias"][:, None, None]
        if cache:
            self._cache = ("shift", (xf, x.shape, (hp, wp), pads, (nh, nw)))
        return out

    def _backward_shift(self, upstream, cache):
        xf, x_shape, (hp, wp), pads, (nh, nw) = cache
        (kh, kw) = self.kernel
        grid = self._buf("ug", (self.out_ch, nh * wp), upstream.dtype)
        grid[:] = 0.0
        grid.reshape(self.out_ch, nh, wp)[:, :, :nw] = upstream
        span = nh * wp
        wk = np.ascontiguousarray(self.params["weight"].transpose(2, 3, 0, 1))
        dw = np.empty_like(self.params["weight"])
        dw_tmp = self._buf("dw", (self.out_ch, self.in_ch), upstream.dtype)
        dxf = self._buf("dxf", xf.shape, upstream.dtype)
        dtmp = self._buf("dtmp", (self.in_ch, span), upstream.dtype)
        dxf[:] = 0.0
        for di in range(kh):
            for dj in range(kw):
                off = di * wp + dj
                np.matmul(grid, xf[:, off:off + span].T, out=dw_tmp)
                dw[:, :, di, dj] = dw_tmp
                np.matmul(wk[di, dj].T, grid, out=dtmp)
                dxf[:, off:off + span] += dtmp
        self.grads["weight"] = dw
        self.grads["bias"] = upstream.sum(axis=(1, 2))
        dxp = dxf[:, :hp * wp].reshape(self.in_ch, hp, wp)
        (pt, _), (pl, _) = pads
        return dxp[:, pt:pt + x_shape[1], pl:pl + x_shape[2]].copy()

    # -- generic strided path via im2col ------------------------------------

    def _forward_cols(self, x, nh, nw, cache):
        (kh, kw), (sh, sw) = self.kernel, self.stride
        pads = self._pads(x.shape)
        xp = np.pad(x, ((0, 0),) + pads) if any(p for pair in pads for p in pair) else x
        cols = _cols_2d(xp, kh, kw, sh, sw)
        w_mat = self.params["weight"].reshape(self.out_ch, -1)
        out = w_mat @ cols
        out += self.params["bias"][:, None]
        if cache:
            self._cache = ("cols", (cols, x.shape, xp.shape, pads, (nh, nw)))
        return out.reshape(self.out_ch, nh, nw)

    def _backward_cols(self, upstream, cache):
        cols, x_shape, xp_shape, pads, (nh, nw) = cache
        (kh, kw), (sh, sw) = self.kernel, self.stride
        up_mat = upstream.reshape(self.out_ch, nh * nw)
        w_mat = self.params["weight"].reshape(self.out_ch, -1)
        self.grads["weight"] = (up_mat @ cols.T).reshape(self.params["weight"].shape)
        self.grads["bias"] = upstream.sum(axis=(1, 2))
        dcols = (w_mat.T @ up_mat).reshape(self.in_ch, kh, kw, nh, nw)
        dxp = np.zeros(xp_shape, dtype=upstream.dtype)
        for di in range(kh):
            for dj in range(kw):
                dxp[:, di:di + sh * (nh - 1) + 1:sh, dj:dj + sw * (nw - 1) + 1:sw] += \
                    dcols[:, di, dj]
        if xp_shape == x_shape:
            return dxp
        (pt, _), (pleft, _) = pads
        return dxp[:, pt:pt + x_shape[1], pleft:pleft + x_shape[2]]


class MaxPool1D(Layer):
    """Sliding max over (C, T); gradient routes to the first argmax per window."""

    def __init__(self, kernel: int, stride: int, name: str = "maxpool1d"):
        super().__init__()
        self.name = name
        self.kernel, self.stride = kernel, stride

    def out_shape(self, in_shape):
        if len(in_shape) != 2:
            raise ShapeError(f"{self.name}: expected rank 2, got {in_shape}")
        if in_shape[1] < self.kernel:
            raise ShapeError(f"{self.name}: extent {in_shape[1]} < kernel {self.kernel}")
        return (in_shape[0], (in_shape[1] - self.kernel) // self.stride + 1)

    def forward(self, x, cache=True):
        _, n = self.out_shape(x.shape)
        k, s = self.kernel, self.stride
        # one shifted strided slice per window offset; argmax over the
        # offset axis picks the first maximum, matching the tie-break rule
        stacked = np.stack([x[:, j:j + s * (n - 1) + 1:s] for j in range(k)])
        am = stacked.argmax(axis=0)
        out = np.take_along_axis(stacked, am[None], axis=0)[0]
        if cache:
            self._cache = (am, x.shape)
        return out

    def backward(self, upstream):
        am, x_shape = self._take_cache()
        ch, size = x_shape
        n = am.shape[1]
        dx = np.zeros(ch * size, dtype=upstream.dtype)
        flat = (np.arange(ch)[:, None] * size + np.arange(n)[None, :] * self.stride + am)
        if self.stride >= self.kernel:  # windows disjoint, targets unique
            dx[flat.ravel()] = upstream.ravel()
        else:
            np.add.at(dx, flat.ravel(), upstream.ravel())
        return dx.reshape(x_shape)


class MaxPool2D(Layer):
    """Max pooling over (C, H, W) windows; first-occurrence tie-breaking."""

    def __init__(self, kernel: tuple[int, int], stride: tuple[int, int],
                 name: str = "maxpool2d"):
        super().__init__()
        self.name = name
        self.kernel, self.stride = kernel, stride

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"{self.name}: expected rank 3, got {in_shape}")
        (kh, kw), (sh, sw) = self.kernel, self.stride
        if in_shape[1] < kh or in_shape[2] < kw:
            raise ShapeError(f"{self.name}: extents {in_shape[1:]} < kernel {self.kernel}")
        return (in_shape[0], (in_shape[1] - kh) // sh + 1, (in_shape[2] - kw) // sw + 1)

    def _window_slices(self, x, nh, nw):
        (kh, kw), (sh, sw) = self.kernel, self.stride
        return [x[:, di:di + sh * (nh - 1) + 1:sh, dj:dj + sw * (nw - 1) + 1:sw]
                for di in range(kh) for dj in range(kw)]

    def forward(self, x, cache=True):
        _, nh, nw = self.out_shape(x.shape)
        slices = self._window_slices(x, nh, nw)
        out = slices[0].copy()
        for s in slices[1:]:
            np.maximum(out, s, out=out)
        if cache:
            self._cache = (x, out, (nh, nw))
        return out

    def backward(self, upstream):
        x, out, (nh, nw) = self._take_cache()
        dx = np.zeros_like(x, dtype=upstream.dtype)
        # route to the first window position equal to the max (ties broken
        # in row-major window order); comparing floats exactly is safe here
        # because out is one of the compared values, untouched by arithmetic
        taken = np.zeros(out.shape, dtype=bool)
        for src, dst in zip(self._window_slices(x, nh, nw),
                            self._window_slices(dx, nh, nw)):
            mask = src == out
            mask &= ~taken
            dst += upstream * mask
            taken |= mask
        return dx


class ReLU(Layer):
    """Elementwise max(0, x).

    With ``inplace=True`` (used inside the model pipeline, where every
    activation and gradient buffer is freshly produced and unaliased) the
    forward overwrites its input and the backward overwrites the upstream
    gradient, saving two large temporaries per call.
    """

    name = "relu"

    def __init__(self, inplace: bool = False):
        super().__init__()
        self.inplace = inplace

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x, cache=True):
        out = np.maximum(x, 0, out=x if self.inplace else None)
        if cache:
            self._cache = out  # out > 0 iff pre-activation > 0
        return out

    def backward(self, upstream):
        out = self._take_cache()
        if self.inplace:
            upstream *= out > 0
            return upstream
        return upstream * (out > 0)


class InceptionNucleus(Layer):
    """Parallel 1-D convolution branches concatenated channel-wise.

    Every branch consumes the same input and must produce the same temporal
    extent, which the model build verifies.
    """

    def __init__(self, branches: list[list[Layer]], name: str = "inception"):
        super().__init__()
        self.name = name
        self.branches = branches

    def param_owners(self):
        return [lyr for branch in self.branches for lyr in branch if lyr.params]

    def out_shape(self, in_shape):
        shapes = []
        for branch in self.branches:
            shape = in_shape
            for lyr in branch:
                shape = lyr.out_shape(shape)
            shapes.append(shape)
        lengths = {s[1] for s in shapes}
        if len(lengths) != 1:
            raise ShapeError(f"{self.name}: branch temporal extents differ: "
                             f"{[s[1] for s in shapes]}")
        return (sum(s[0] for s in shapes), lengths.pop())

    def forward(self, x, cache=True):
        outs = []
        for branch in self.branches:
            h = x
            for lyr in branch:
                h = lyr.forward(h, cache=cache)
            outs.append(h)
        lengths = {o.shape[1] for o in outs}
        if len(lengths) != 1:
            raise ShapeError(f"{self.name}: branch temporal extents differ: "
                             f"{[o.shape[1] for o in outs]}")
        if cache:
            self._cache = [o.shape[0] for o in outs]
        return np.concatenate(outs, axis=0)

    def backward(self, upstream):
        channels = self._take_cache()
        dx = None
        offset = 0
        for branch, ch in zip(self.branches, channels):
            du = upstream[offset:offset + ch]
            for lyr in reversed(branch):
                du = lyr.backward(du)
            dx = du if dx is None else dx + du
            offset += ch
        return dx


class ChannelsFirstReshape(Layer):
    """Relabel a (C, T) feature map as a single-channel (1, C, T) image."""

    name = "reshape_channels_first"

    def out_shape(self, in_shape):
        if len(in_shape) != 2:
            raise ShapeError(f"{self.name}: expected rank 2, got {in_shape}")
        return (1,) + tuple(in_shape)

    def forward(self, x, cache=True):
        return x.reshape((1,) + x.shape)

    def backward(self, upstream):
        return upstream.reshape(upstream.shape[1:])


class Flatten(Layer):
    name = "flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, cache=True):
        if cache:
            self._cache = x.shape
        return x.reshape(-1)

    def backward(self, upstream):
        return upstream.reshape(self._take_cache())


class Dense(Layer):
    """Fully connected map from a flat vector to logits; optional head style."""

    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator, dtype, name: str = "dense"):
        super().__init__()
        self.name = name
        self.in_features, self.out_features = in_features, out_features
        self.params["weight"] = glorot_init(
            (out_features, in_features), in_features, out_features, rng, dtype)
        self.params["bias"] = np.zeros(out_features, dtype=dtype)

    def out_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.in_features:
            raise ShapeError(f"{self.name}: expected ({self.in_features},), got {in_shape}")
        return (self.out_features,)

    def forward(self, x, cache=True):
        if cache:
            self._cache = x
        return self.params["weight"] @ x + self.params["bias"]

    def backward(self, upstream):
        x = self._take_cache()
        self.grads["weight"] = np.outer(upstream, x)
        self.grads["bias"] = upstream.copy()
        return self.params["weight"].T @ upstream


class ClassHead(Layer):
    """Global average pooling: one logit per channel, mean over spatial axes."""

    def __init__(self, num_classes: int, name: str = "class_head"):
        super().__init__()
        self.name = name
        self.num_classes = num_classes

    def out_shape(self, in_shape):
        if len(in_shape) < 2:
            raise ShapeError(f"{self.name}: need channel + spatial axes, got {in_shape}")
        if in_shape[0] != self.num_classes:
            raise ShapeError(f"{self.name}: {in_shape[0]} channels for "
                             f"{self.num_classes} classes")
        return (self.num_classes,)

    def forward(self, x, cache=True):
        self.out_shape(x.shape)
        if cache:
            self._cache = x.shape
        return x.mean(axis=tuple(range(1, x.ndim)))

    def backward(self, upstream):
        shape = self._take_cache()
        scale = upstream / int(np.prod(shape[1:]))
        return np.broadcast_to(scale.reshape((-1,) + (1,) * (len(shape) - 1)), shape).copy()


def softmax_xent(logits: np.ndarray, true_class: int):
    """Softmax cross-entropy for one sample.

    Returns (loss, probs, dlogits) where dlogits = probs - onehot(true_class).
    Exponentials are max-subtracted so large logits cannot overflow.
    """
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError(f"non-finite logits: {logits}")
    k = logits.size
    if k < 2:
        raise ShapeError(f"need at least 2 classes, got {k}")
    if not 0 <= true_class < k:
        raise IndexError(f"true_class {true_class} out of range for {k} classes")
    shifted = logits - logits.max()
    exps = np.exp(shifted)
    probs = exps / exps.sum()
    with np.errstate(divide="ignore"):  # p[true] == 0 legitimately yields inf
        loss = float(-np.log(probs[true_class]))
    dlogits = probs.copy()
    dlogits[true_class] -= 1.0
    return loss, probs, dlogits
