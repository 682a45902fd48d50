"""Minimal feed-forward nets, Adam and gradient checking, all in numpy.

Everything runs in float64 with hand-derived backward passes; there is
no autograd dependency anywhere in the training path. Parameter init
draws from a caller-supplied ``numpy.random.Generator``, so a seed
fixes every weight.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

LEAKY_SLOPE = 0.2

P_CLAMP = 1e-7


def leaky_relu(x: np.ndarray, slope: float = LEAKY_SLOPE) -> np.ndarray:
    return np.where(x >= 0.0, x, slope * x)


def leaky_relu_grad(x: np.ndarray, slope: float = LEAKY_SLOPE) -> np.ndarray:
    return np.where(x >= 0.0, 1.0, slope)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(z: np.ndarray) -> np.ndarray:
    """Stable softmax over the last axis."""
    z = np.asarray(z, dtype=float)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def binary_cross_entropy(target: np.ndarray, prob: np.ndarray) -> float:
    """Sum-reduced binary cross entropy with probability clamping.

    Probabilities are clamped to [1e-7, 1 - 1e-7] before the logs, so
    exact zeros and ones stay finite.
    """
    target = np.asarray(target, dtype=float)
    prob = np.asarray(prob, dtype=float)
    if target.shape != prob.shape:
        raise ValueError(
            f"target shape {target.shape} does not match prob shape {prob.shape}"
        )
    p = np.clip(prob, P_CLAMP, 1.0 - P_CLAMP)
    return float(-(target * np.log(p) + (1.0 - target) * np.log(1.0 - p)).sum())


def binary_cross_entropy_grad(target: np.ndarray, prob: np.ndarray) -> np.ndarray:
    """d BCE / d prob, zero wherever the clamp is active."""
    target = np.asarray(target, dtype=float)
    prob = np.asarray(prob, dtype=float)
    p = np.clip(prob, P_CLAMP, 1.0 - P_CLAMP)
    grad = -target / p + (1.0 - target) / (1.0 - p)
    active = (prob > P_CLAMP) & (prob < 1.0 - P_CLAMP)
    return np.where(active, grad, 0.0)


def softmax_grad_from_probs(p: np.ndarray, dp: np.ndarray) -> np.ndarray:
    """Backprop through softmax given output probs and upstream grad."""
    return p * (dp - float(np.dot(dp, p)))


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


class Ffnn:
    """Fully-connected net: LeakyReLU hidden layers, identity output.

    ``sizes`` lists layer widths input first, e.g. [10, 32, 1]. Weights
    are Glorot-uniform, biases zero. ``forward`` accepts a single
    vector (d,) or a batch (B, d) and returns matching shape plus a
    tape for ``backward``.
    """

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator):
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ValueError(f"bad layer sizes {sizes!r}")
        self.sizes = list(sizes)
        self.weights = [
            glorot_uniform(rng, sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)
        ]
        self.biases = [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)]

    @property
    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def forward(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.sizes[0]:
            raise ValueError(
                f"input width {h.shape[1]} does not match layer size {self.sizes[0]}"
            )
        acts = [h]
        pres = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            pre = h @ w.T + b
            if i < last:
                pres.append(pre)
                h = leaky_relu(pre)
                acts.append(h)
            else:
                h = pre
        tape = (acts, pres, single)
        return (h[0] if single else h), tape

    def backward(self, tape, dout: np.ndarray):
        """Gradients of a scalar loss given d loss / d output.

        Returns (grads, dx) where grads aligns with ``params`` and dx
        is the gradient with respect to the input batch.
        """
        acts, pres, single = tape
        if len(acts) != len(self.weights) or len(pres) != len(self.weights) - 1:
            raise ValueError("stale tape: layer count does not match this net")
        d = np.asarray(dout, dtype=float)
        if single:
            d = d[None, :]
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            x_in = acts[i]
            if x_in.shape[1] != self.weights[i].shape[1]:
                raise ValueError("stale tape: activation width mismatch")
            grads[2 * i] = d.T @ x_in
            grads[2 * i + 1] = d.sum(axis=0)
            dx = d @ self.weights[i]
            if i > 0:
                dx = dx * leaky_relu_grad(pres[i - 1])
            d = dx
        return grads, (d[0] if single else d)

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Ffnn":
        net = cls.__new__(cls)
        net.sizes = list(payload["sizes"])
        net.weights = [np.array(w, dtype=float) for w in payload["weights"]]
        net.biases = [np.array(b, dtype=float) for b in payload["biases"]]
        for i, w in enumerate(net.weights):
            if w.shape != (net.sizes[i + 1], net.sizes[i]):
                raise ValueError(f"checkpoint weight {i} has shape {w.shape}")
        return net


class Adam:
    """Adam with bias correction; one instance owns one parameter list."""

    def __init__(
        self,
        params: Sequence[np.ndarray],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        """Update params in place from one gradient evaluation."""
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ValueError("parameter list does not match optimizer state")
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_err: float
    n_checked: int
    passed: bool
    worst_param: int = -1
    worst_index: tuple = ()


def finite_diff_check(
    loss_fn: Callable[[], float],
    params: Sequence[np.ndarray],
    analytic: Sequence[np.ndarray],
    h: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    ``loss_fn`` must recompute the loss from the live ``params`` arrays;
    the checker perturbs them in place and restores each coordinate.
    The per-coordinate error is |a - n| / max(|a|, |n|, 1e-3); the
    floor keeps coordinates whose true gradient is exactly zero from
    amplifying difference noise.
    """
    worst = 0.0
    worst_param = -1
    worst_index: tuple = ()
    checked = 0
    for pi, (p, a) in enumerate(zip(params, analytic)):
        if p.shape != np.asarray(a).shape:
            raise ValueError(
                f"analytic gradient {pi} shape {np.asarray(a).shape} does not "
                f"match parameter shape {p.shape}"
            )
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            lo_hi = loss_fn()
            p[idx] = orig - h
            lo_lo = loss_fn()
            p[idx] = orig
            numeric = (lo_hi - lo_lo) / (2.0 * h)
            an = float(np.asarray(a)[idx])
            err = abs(an - numeric) / max(abs(an), abs(numeric), 1e-3)
            if err > worst:
                worst = err
                worst_param = pi
                worst_index = idx
            checked += 1
            it.iternext()
    return GradCheckReport(
        max_rel_err=worst,
        n_checked=checked,
        passed=worst <= tol,
        worst_param=worst_param,
        worst_index=worst_index,
    )


def save_json(payload: dict, path: str | Path) -> None:
    """Write a checkpoint; float repr round-trips bit-exactly."""
    Path(path).write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")


def load_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
