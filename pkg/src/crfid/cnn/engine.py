"""Forward pass, reverse-mode gradients and Adam updates for ``ArchitectureSpec`` networks.

Parameters are a flat ``dict`` keyed ``"<layer index>.<name>"`` (``W``, ``b``,
``gamma``, ``beta``); batch-norm running statistics live in a separate
``buffers`` dict with the same key scheme.  All arrays are float64.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .layers import ArchitectureSpec, BatchNorm, Conv1D, Dense, Dropout, Flatten, MaxPool1D, output_shapes


class ShapeError(ValueError):
    pass


class StaleCacheError(RuntimeError):
    pass


def init_params(spec: ArchitectureSpec, rng: np.random.Generator) -> tuple[dict, dict]:
    """He-uniform weights, zero biases, unit/zero batch-norm scale/shift."""
    params, buffers = {}, {}
    shape = spec.input_shape
    for i, (layer, out) in enumerate(zip(spec.layers, output_shapes(spec))):
        if isinstance(layer, Conv1D):
            fan_in = layer.kernel * shape[1]
            lim = np.sqrt(6.0 / fan_in)
            params[f"{i}.W"] = rng.uniform(-lim, lim, (layer.kernel, shape[1], layer.filters))
            params[f"{i}.b"] = np.zeros(layer.filters)
        elif isinstance(layer, Dense):
            lim = np.sqrt(6.0 / shape[0])
            params[f"{i}.W"] = rng.uniform(-lim, lim, (shape[0], layer.units))
            params[f"{i}.b"] = np.zeros(layer.units)
        elif isinstance(layer, BatchNorm):
            c = shape[-1]
            params[f"{i}.gamma"] = np.ones(c)
            params[f"{i}.beta"] = np.zeros(c)
            buffers[f"{i}.mean"] = np.zeros(c)
            buffers[f"{i}.var"] = np.ones(c)
        shape = out
    return params, buffers


def n_params(params: dict) -> int:
    return sum(v.size for v in params.values())


@dataclass
class Cache:
    params: dict
    training: bool
    entries: list = field(default_factory=list)
    buffer_updates: dict = field(default_factory=dict)


def _check_finite(x, i, debug):
    if debug and not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values after layer {i}")


def forward(
    spec: ArchitectureSpec,
    params: dict,
    x: np.ndarray,
    training: bool = False,
    buffers: dict | None = None,
    rng: np.random.Generator | None = None,
    debug: bool = False,
):
    """Run ``x`` of shape (n, length, channels) through the network.

    Returns ``(predictions (n, 1), cache)``.  In training mode batch norm uses
    batch statistics (new running averages are left in
    ``cache.buffer_updates``) and dropout draws masks from ``rng``.
    """
    h = np.asarray(x, dtype=np.float64)
    if h.ndim != 3:
        raise ShapeError(f"input must be (n, length, channels), got shape {h.shape}")
    cache = Cache(params, training)
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv1D):
            W, b = params[f"{i}.W"], params[f"{i}.b"]
            k, cin, cout = W.shape
            if h.ndim != 3 or h.shape[2] != cin or h.shape[1] < k:
                raise ShapeError(f"layer {i} (Conv1D): got input {h.shape[1:]}, needs (>= {k}, {cin})")
            n, length = h.shape[:2]
            lout = length - k + 1
            # (n, lout, cin, k) -> (n*lout, k*cin), matching W.reshape(k*cin, cout)
            cols = sliding_window_view(h, k, axis=1).transpose(0, 1, 3, 2).reshape(n * lout, k * cin)
            z = (cols @ W.reshape(k * cin, cout)).reshape(n, lout, cout) + b
            out = np.maximum(z, 0.0) if layer.activation == "relu" else z
            cache.entries.append((cols, z, h.shape))
            h = out
        elif isinstance(layer, MaxPool1D):
            if h.ndim != 3 or h.shape[1] < layer.size:
                raise ShapeError(f"layer {i} (MaxPool1D): input {h.shape[1:]} too short")
            n, length, c = h.shape
            lout = length // layer.size
            win = h[:, : lout * layer.size].reshape(n, lout, layer.size, c)
            # running max over the (small) window; first maximum wins ties like argmax
            best, arg = win[:, :, 0].copy(), np.zeros((n, lout, c), dtype=np.intp)
            for s in range(1, layer.size):
                take = win[:, :, s] > best
                best[take] = win[:, :, s][take]
                arg[take] = s
            cache.entries.append((arg, h.shape))
            h = best
        elif isinstance(layer, BatchNorm):
            gamma, beta = params[f"{i}.gamma"], params[f"{i}.beta"]
            if h.shape[-1] != gamma.size:
                raise ShapeError(f"layer {i} (BatchNorm): {h.shape[-1]} channels, expected {gamma.size}")
            axes = tuple(range(h.ndim - 1))
            if training:
                mu = h.mean(axis=axes)
                var = h.var(axis=axes)
                if buffers is not None:
                    m = layer.momentum
                    cache.buffer_updates[f"{i}.mean"] = m * buffers[f"{i}.mean"] + (1 - m) * mu
                    cache.buffer_updates[f"{i}.var"] = m * buffers[f"{i}.var"] + (1 - m) * var
            else:
                if buffers is None:
                    raise ValueError("inference-mode batch norm needs running buffers")
                mu, var = buffers[f"{i}.mean"], buffers[f"{i}.var"]
            inv = 1.0 / np.sqrt(var + layer.eps)
            xhat = (h - mu) * inv
            cache.entries.append((xhat, inv, axes))
            h = gamma * xhat + beta
        elif isinstance(layer, Dropout):
            if training and layer.rate > 0:
                if rng is None:
                    raise ValueError("training-mode dropout needs an rng")
                mask = (rng.random(h.shape) >= layer.rate) / (1.0 - layer.rate)
                h = h * mask
            else:
                mask = None
            cache.entries.append(mask)
        elif isinstance(layer, Flatten):
            cache.entries.append(h.shape)
            h = h.reshape(h.shape[0], -1)
        elif isinstance(layer, Dense):
            W, b = params[f"{i}.W"], params[f"{i}.b"]
            if h.ndim != 2 or h.shape[1] != W.shape[0]:
                raise ShapeError(f"layer {i} (Dense): got input {h.shape[1:]}, needs ({W.shape[0]},)")
            z = h @ W + b
            cache.entries.append((h, z))
            h = np.maximum(z, 0.0) if layer.activation == "relu" else z
        else:
            raise TypeError(f"layer {i}: unsupported layer {layer!r}")
        _check_finite(h, i, debug)
    return h, cache


def backward(spec: ArchitectureSpec, params: dict, cache: Cache, grad_out: np.ndarray) -> dict:
    """Gradients of a scalar loss w.r.t. every parameter, given dLoss/dPrediction."""
    if cache.params is not params or any(cache.params[k] is not v for k, v in params.items()):
        raise StaleCacheError("cache was produced with different parameters")
    if len(cache.entries) != len(spec.layers):
        raise StaleCacheError("cache does not match the architecture")
    grads = {}
    g = np.asarray(grad_out, dtype=np.float64)
    for i in range(len(spec.layers) - 1, -1, -1):
        layer, entry = spec.layers[i], cache.entries[i]
        if isinstance(layer, Dense):
            h, z = entry
            if layer.activation == "relu":
                g = g * (z > 0)
            grads[f"{i}.W"] = h.T @ g
            grads[f"{i}.b"] = g.sum(axis=0)
            g = g @ params[f"{i}.W"].T
        elif isinstance(layer, Flatten):
            g = g.reshape(entry)
        elif isinstance(layer, Dropout):
            if entry is not None:
                g = g * entry
        elif isinstance(layer, BatchNorm):
            xhat, inv, axes = entry
            gamma = params[f"{i}.gamma"]
            grads[f"{i}.gamma"] = (g * xhat).sum(axis=axes)
            grads[f"{i}.beta"] = g.sum(axis=axes)
            dxhat = g * gamma
            if cache.training:
                m = np.prod([xhat.shape[a] for a in axes])
                g = inv / m * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
            else:
                g = dxhat * inv
        elif isinstance(layer, MaxPool1D):
            arg, in_shape = entry
            n, lout, c = g.shape
            win = (arg[:, :, None, :] == np.arange(layer.size)[:, None]) * g[:, :, None, :]
            dx = np.zeros(in_shape)
            dx[:, : lout * layer.size] = win.reshape(n, lout * layer.size, c)
            g = dx
        elif isinstance(layer, Conv1D):
            cols, z, in_shape = entry
            W = params[f"{i}.W"]
            k, cin, cout = W.shape
            if layer.activation == "relu":
                g = g * (z > 0)
            n, lout, _ = g.shape
            g2 = g.reshape(n * lout, cout)
            grads[f"{i}.W"] = (cols.T @ g2).reshape(k, cin, cout)
            grads[f"{i}.b"] = g2.sum(axis=0)
            dcols = (g2 @ W.reshape(k * cin, cout).T).reshape(n, lout, k, cin)
            dx = np.zeros(in_shape)
            for j in range(k):
                dx[:, j : j + lout] += dcols[:, :, j]
            g = dx
    return grads


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over the batch and its gradient w.r.t. ``pred``."""
    target = np.asarray(target, dtype=np.float64).reshape(pred.shape)
    diff = pred - target
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


@dataclass
class AdamState:
    m: dict
    v: dict


def adam_init(params: dict) -> AdamState:
    return AdamState({k: np.zeros_like(v) for k, v in params.items()},
                     {k: np.zeros_like(v) for k, v in params.items()})


def adam_step(params: dict, grads: dict, state: AdamState, t: int, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> tuple[dict, AdamState]:
    """One bias-corrected Adam update; returns new arrays and leaves the inputs untouched."""
    if t < 1:
        raise ValueError("Adam step index starts at 1")
    new_p, new_m, new_v = {}, {}, {}
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for k, p in params.items():
        g = grads[k]
        m = beta1 * state.m[k] + (1.0 - beta1) * g
        v = beta2 * state.v[k] + (1.0 - beta2) * g * g
        new_p[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(new_m, new_v)


def predict(spec: ArchitectureSpec, params: dict, buffers: dict, x: np.ndarray,
            batch_size: int = 256) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = [forward(spec, params, x[s : s + batch_size], False, buffers)[0]
           for s in range(0, x.shape[0], batch_size)]
    return np.concatenate(out, axis=0)[:, 0]
