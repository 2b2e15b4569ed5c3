"""Minimal neural core in float64 numpy: a single LSTM layer, a dense head,
MAE loss, and Adam, all with hand-derived gradients.

Layers expose ``forward(...) -> (output, cache)`` and
``backward(cache, upstream) -> (grads, input_grads)``.  Parameter gradients
are summed over the batch; the loss gradient carries the batch averaging,
so composing them yields batch-mean gradients.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import ContractError

__all__ = ["LstmLayer", "DenseLayer", "Adam", "mae_loss", "glorot_uniform"]


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...],
                   fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class LstmLayer:
    """Single LSTM layer over (batch, steps, features) sequences.

    Standard gate algebra: i, f, o through the logistic sigmoid, candidate g
    through tanh, c = f*c + i*g, h = o*tanh(c).  No peepholes; the forget
    bias starts at 1.0.  Initial hidden and cell states are zero.
    """

    GATES = ("i", "f", "o", "g")

    def __init__(self, input_size: int, hidden_size: int,
                 rng: np.random.Generator | None = None):
        self.input_size = input_size
        self.hidden_size = hidden_size
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: dict[str, np.ndarray] = {}
        for gate in self.GATES:
            self.params[f"w_{gate}"] = glorot_uniform(
                rng, (hidden_size, input_size), input_size, hidden_size)
            self.params[f"u_{gate}"] = glorot_uniform(
                rng, (hidden_size, hidden_size), hidden_size, hidden_size)
            self.params[f"b_{gate}"] = np.zeros(hidden_size)
        self.params["b_f"] = np.ones(hidden_size)

    def forward(self, seq: np.ndarray) -> tuple[np.ndarray, dict]:
        """Hidden states for every step, plus the cache for backward.

        ``seq`` has shape (B, m, input_size); the result has shape
        (B, m, hidden_size).  A zero-length sequence yields empty output.
        """
        seq = np.asarray(seq, dtype=np.float64)
        if seq.ndim != 3 or seq.shape[2] != self.input_size:
            raise ContractError(
                f"expected (batch, steps, {self.input_size}) input, "
                f"got shape {seq.shape}")
        if not np.all(np.isfinite(seq)):
            raise ContractError("input sequence contains non-finite values")
        batch, steps, _ = seq.shape
        size = self.hidden_size
        p = self.params
        w = np.concatenate([p[f"w_{g}"] for g in self.GATES], axis=0)  # (4S, k)
        u = np.concatenate([p[f"u_{g}"] for g in self.GATES], axis=0)  # (4S, S)
        b = np.concatenate([p[f"b_{g}"] for g in self.GATES])          # (4S,)

        h = np.zeros((batch, size))
        c = np.zeros((batch, size))
        hs = np.empty((batch, steps, size))
        cache = {"x": seq, "h_prev": np.empty((batch, steps, size)),
                 "c_prev": np.empty((batch, steps, size)),
                 "gates": np.empty((batch, steps, 4 * size)),
                 "tanh_c": np.empty((batch, steps, size))}
        xw = seq @ w.T + b      # input contribution for every step at once
        for t in range(steps):
            cache["h_prev"][:, t] = h
            cache["c_prev"][:, t] = c
            z = xw[:, t] + h @ u.T
            gates = cache["gates"][:, t]
            expit(z[:, :3 * size], out=gates[:, :3 * size])
            np.tanh(z[:, 3 * size:], out=gates[:, 3 * size:])
            c = gates[:, size:2 * size] * c \
                + gates[:, :size] * gates[:, 3 * size:]
            tc = np.tanh(c)
            h = gates[:, 2 * size:3 * size] * tc
            cache["tanh_c"][:, t] = tc
            hs[:, t] = h
        return hs, cache

    def backward(self, cache: dict, dh_seq: np.ndarray) -> tuple[dict, np.ndarray]:
        """Backpropagation through time.

        ``dh_seq`` is the loss gradient w.r.t. every hidden state,
        shape (B, m, S).  Returns parameter gradients (summed over the
        batch) and gradients w.r.t. the input sequence.
        """
        x = cache["x"]
        batch, steps, _ = x.shape
        size = self.hidden_size
        dh_seq = np.asarray(dh_seq, dtype=np.float64)
        if dh_seq.shape != (batch, steps, size):
            raise ContractError(
                f"upstream gradient shape {dh_seq.shape} does not match "
                f"cached forward shape {(batch, steps, size)}")
        p = self.params
        u = np.concatenate([p[f"u_{g}"] for g in self.GATES], axis=0)
        w = np.concatenate([p[f"w_{g}"] for g in self.GATES], axis=0)

        dw = np.zeros_like(w)
        du = np.zeros_like(u)
        db = np.zeros(4 * size)
        dx = np.empty_like(x)
        dh_next = np.zeros((batch, size))
        dc_next = np.zeros((batch, size))
        dz = np.empty((batch, 4 * size))
        for t in range(steps - 1, -1, -1):
            gates = cache["gates"][:, t]
            gi, gf = gates[:, :size], gates[:, size:2 * size]
            go, gg = gates[:, 2 * size:3 * size], gates[:, 3 * size:]
            tc = cache["tanh_c"][:, t]
            dh = dh_seq[:, t] + dh_next
            dc = dh * go * (1.0 - tc ** 2) + dc_next
            dz[:, :size] = dc * gg * gi * (1.0 - gi)                    # input
            dz[:, size:2 * size] = dc * cache["c_prev"][:, t] \
                * gf * (1.0 - gf)                                       # forget
            dz[:, 2 * size:3 * size] = dh * tc * go * (1.0 - go)       # output
            dz[:, 3 * size:] = dc * gi * (1.0 - gg ** 2)               # candidate
            dw += dz.T @ x[:, t]
            du += dz.T @ cache["h_prev"][:, t]
            db += dz.sum(axis=0)
            dh_next = dz @ u
            dc_next = dc * gf
            dx[:, t] = dz @ w

        grads = {}
        for idx, gate in enumerate(self.GATES):
            sl = slice(idx * size, (idx + 1) * size)
            grads[f"w_{gate}"] = dw[sl]
            grads[f"u_{gate}"] = du[sl]
            grads[f"b_{gate}"] = db[sl]
        return grads, dx


class DenseLayer:
    """Fully connected layer with ReLU or identity activation."""

    def __init__(self, input_size: int, output_size: int,
                 activation: str = "identity",
                 rng: np.random.Generator | None = None):
        if activation not in ("relu", "identity"):
            raise ContractError(f"unknown activation {activation!r}")
        self.input_size = input_size
        self.output_size = output_size
        self.activation = activation
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = {
            "w": glorot_uniform(rng, (output_size, input_size),
                                input_size, output_size),
            "b": np.zeros(output_size),
        }

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_size:
            raise ContractError(
                f"expected (n, {self.input_size}) input, got shape {x.shape}")
        pre = x @ self.params["w"].T + self.params["b"]
        out = np.maximum(pre, 0.0) if self.activation == "relu" else pre
        return out, {"x": x, "pre": pre}

    def backward(self, cache: dict, dout: np.ndarray) -> tuple[dict, np.ndarray]:
        dout = np.asarray(dout, dtype=np.float64)
        if dout.shape != cache["pre"].shape:
            raise ContractError("upstream gradient shape mismatch")
        dpre = dout * (cache["pre"] > 0.0) if self.activation == "relu" else dout
        grads = {"w": dpre.T @ cache["x"], "b": dpre.sum(axis=0)}
        return grads, dpre @ self.params["w"]


def mae_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean absolute error over all elements, with its subgradient.

    The subgradient is sign(pred - target) / n_elements, zero at exact ties.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ContractError(
            f"prediction shape {pred.shape} != target shape {target.shape}")
    diff = pred - target
    loss = float(np.abs(diff).mean())
    grad = np.sign(diff) / diff.size
    return loss, grad


class Adam:
    """Adam optimizer with bias-corrected moments, keyed like the params."""

    def __init__(self, learning_rate: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray],
             grads: dict[str, np.ndarray]) -> None:
        """Update ``params`` in place from ``grads``."""
        if set(grads) - set(params):
            raise ContractError("gradient keys do not match parameters")
        self.step_count += 1
        t = self.step_count
        for key, grad in grads.items():
            if grad.shape != params[key].shape:
                raise ContractError(f"gradient shape mismatch for {key!r}")
            if key not in self.m:
                self.m[key] = np.zeros_like(grad)
                self.v[key] = np.zeros_like(grad)
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * grad
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * grad ** 2
            m_hat = self.m[key] / (1.0 - self.beta1 ** t)
            v_hat = self.v[key] / (1.0 - self.beta2 ** t)
            params[key] -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
