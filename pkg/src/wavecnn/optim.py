"""Parameter initialization and updates: Glorot uniform, Adam, L2 penalty."""

from __future__ import annotations

import numpy as np

from .tensor import DTYPE


class NonFiniteGradient(FloatingPointError):
    """A gradient contained NaN or inf; the batch must be aborted."""


def glorot_init(shape, fan_in: int, fan_out: int, rng: np.random.Generator,
                dtype=DTYPE) -> np.ndarray:
    """Uniform draw on (-L, L) with L = sqrt(6 / (fan_in + fan_out)).

    For a convolution, fan_in = in_ch * prod(kernel) and
    fan_out = out_ch * prod(kernel).  Biases are initialized to zero
    elsewhere; this function is for weights only.
    """
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fans must be >= 1, got {fan_in}, {fan_out}")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=tuple(shape)).astype(dtype)


class Adam:
    """Adam with bias correction; one shared step counter for all tensors.

    update: m <- b1*m + (1-b1)*g ; v <- b2*v + (1-b2)*g^2 ;
    param <- param - lr * m_hat / (sqrt(v_hat) + eps), updated in place.
    """

    def __init__(self, params: list[np.ndarray], lr: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray], names: list[str] | None = None) -> None:
        if len(grads) != len(self.params):
            raise ValueError(f"got {len(grads)} gradients for {len(self.params)} parameters")
        for i, g in enumerate(grads):
            if not np.all(np.isfinite(g)):
                name = names[i] if names else f"parameter {i}"
                raise NonFiniteGradient(f"non-finite gradient in {name}")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)


def l2_penalty(weights: list[np.ndarray], lam: float):
    """Loss addend lam * sum(w^2) and gradient addends 2 * lam * w.

    Applies to weight tensors only; biases are excluded by the caller.
    The penalty uses the lam * sum(w^2) convention (no 1/2 factor).
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    if lam == 0.0:
        return 0.0, [np.zeros_like(w) for w in weights]
    loss = lam * float(sum(np.sum(np.square(w, dtype=np.float64)) for w in weights))
    return loss, [(2.0 * lam) * w for w in weights]
