"""Dense Q-networks in plain numpy.

Two architectures are supported, both with linear output units:

``single``
    ``x -> sigmoid -> sigmoid -> linear``, a three-layer MLP.

``split``
    The observation is cut into an own-agent slice ``s1`` and an other-agent
    slice ``s2``; each is upscaled by its own sigmoid layer, the two are
    concatenated and passed through a ReLU layer whose output is added
    element-wise to the own-agent upscaling (a residual block)::

        state1    = sigmoid(s1 W1 + b1)
        state2    = sigmoid(s2 W2 + b2)
        residual  = relu([state1; state2] Wj + bj)
        embedding = state1 + residual
        output    = embedding Wo + bo

Inputs are batches of row vectors, so weights are stored ``(fan_in, fan_out)``.
Gradients are written out by hand; :func:`backward` returns the exact
gradient of the mean Huber loss on the selected outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from nashdqn.errors import ConfigError, UsageError

ARCHITECTURES = ("single", "split")


class NetworkParams:
    """Weights of one network.

    All tensors are views into a single flat vector, so optimiser updates
    and copies touch one contiguous array.
    """

    def __init__(self, arch: str, tensors: Mapping[str, np.ndarray], in_dim: int, out_dim: int,
                 self_index=None, other_index=None, dtype=None):
        self.arch = arch
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self.self_index = None if self_index is None else np.asarray(self_index, dtype=int)
        self.other_index = None if other_index is None else np.asarray(other_index, dtype=int)
        dtype = np.result_type(*tensors.values()) if dtype is None else np.dtype(dtype)
        self.flat = np.concatenate([np.asarray(v, dtype=dtype).ravel() for v in tensors.values()])
        self.shapes = {k: np.shape(v) for k, v in tensors.items()}
        self.tensors = _views(self.flat, self.shapes)

    @property
    def dtype(self) -> np.dtype:
        return self.flat.dtype

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def astype(self, dtype) -> "NetworkParams":
        return NetworkParams(self.arch, self.tensors, self.in_dim, self.out_dim,
                             self.self_index, self.other_index, dtype)

    def __deepcopy__(self, memo):
        return self.astype(self.dtype)

    def __repr__(self):
        return f"NetworkParams({self.arch!r}, in_dim={self.in_dim}, out_dim={self.out_dim}, dtype={self.dtype})"


def _views(flat: np.ndarray, shapes: Mapping[str, tuple]) -> dict[str, np.ndarray]:
    out, offset = {}, 0
    for name, shape in shapes.items():
        size = int(np.prod(shape, dtype=int))
        out[name] = flat[offset: offset + size].reshape(shape)
        offset += size
    return out


class Gradients(dict):
    """Per-tensor gradients backed by one flat vector (``.flat``)."""

    def __init__(self, params: NetworkParams):
        self.flat = np.zeros_like(params.flat)
        super().__init__(_views(self.flat, params.shapes))


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    lr: float = 0.01
    decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @property
    def current_lr(self) -> float:
        return self.lr / (1.0 + self.decay * self.step)


@dataclass
class Cache:
    """Activations kept from a forward pass for the backward pass."""

    x: object = None
    acts: dict[str, np.ndarray] = field(default_factory=dict)


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Logistic function, computed in place on ``z`` (callers pass temporaries)."""
    np.negative(z, out=z)
    np.exp(z, out=z)
    z += 1.0
    return np.reciprocal(z, out=z)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_single(in_dim: int, out_dim: int, hidden=(64, 64), rng=None, dtype=np.float64) -> NetworkParams:
    rng = np.random.default_rng(rng)
    h1, h2 = hidden
    tensors = {
        "W1": _glorot(rng, in_dim, h1),
        "b1": np.zeros(h1),
        "W2": _glorot(rng, h1, h2),
        "b2": np.zeros(h2),
        "W3": _glorot(rng, h2, out_dim),
        "b3": np.zeros(out_dim),
    }
    return NetworkParams("single", tensors, in_dim, out_dim, dtype=dtype)


def init_split(
    self_index,
    other_index,
    out_dim: int,
    upscale: int = 32,
    other_upscale: int | None = None,
    rng=None,
    dtype=np.float64,
) -> NetworkParams:
    """Split-stream network; the joint layer width equals ``upscale`` so the residual can be added."""
    rng = np.random.default_rng(rng)
    self_index = np.asarray(self_index, dtype=int)
    other_index = np.asarray(other_index, dtype=int)
    u1 = upscale
    u2 = upscale if other_upscale is None else other_upscale
    d1, d2 = len(self_index), len(other_index)
    tensors = {
        "W1": _glorot(rng, d1, u1),
        "b1": np.zeros(u1),
        "W2": _glorot(rng, d2, u2),
        "b2": np.zeros(u2),
        "Wj": _glorot(rng, u1 + u2, u1),
        "bj": np.zeros(u1),
        "Wo": _glorot(rng, u1, out_dim),
        "bo": np.zeros(out_dim),
    }
    in_dim = int(max(self_index.max(), other_index.max()) + 1)
    return NetworkParams("split", tensors, in_dim, out_dim, self_index, other_index, dtype)


def init_params(arch: str, in_dim: int, out_dim: int, *, hidden=(64, 64), upscale=32,
                split_index=None, rng=None, dtype=np.float64) -> NetworkParams:
    if arch == "single":
        return init_single(in_dim, out_dim, hidden, rng, dtype)
    if arch == "split":
        if split_index is None:
            raise ConfigError("network.architecture: split stream needs a (self, other) observation split")
        return init_split(split_index[0], split_index[1], out_dim, upscale, rng=rng, dtype=dtype)
    raise ConfigError(f"network.architecture: unknown architecture {arch!r} (choose from {ARCHITECTURES})")


# -- forward --------------------------------------------------------------

def _as_batch(obs, params: NetworkParams) -> np.ndarray:
    x = np.asarray(obs, dtype=params.dtype)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[-1] != params.in_dim:
        raise UsageError(f"observation has {x.shape[-1]} features, network expects {params.in_dim}")
    return x


def forward_single(params: NetworkParams, obs, cache: Cache | None = None) -> np.ndarray:
    """Q-values for a batch (or a single vector) of observations."""
    single = np.ndim(obs) == 1
    x = _as_batch(obs, params)
    t = params.tensors
    h1 = sigmoid(x @ t["W1"] + t["b1"])
    h2 = sigmoid(h1 @ t["W2"] + t["b2"])
    q = h2 @ t["W3"]
    q += t["b3"]
    if cache is not None:
        cache.x = x
        cache.acts.update(h1=h1, h2=h2)
    return q[0] if single else q


def forward_split(params: NetworkParams, self_slice, other_slice, cache: Cache | None = None) -> np.ndarray:
    single = np.ndim(self_slice) == 1
    t = params.tensors
    s1 = np.atleast_2d(np.asarray(self_slice, dtype=params.dtype))
    s2 = np.atleast_2d(np.asarray(other_slice, dtype=params.dtype))
    if s1.shape[-1] != t["W1"].shape[0] or s2.shape[-1] != t["W2"].shape[0]:
        raise UsageError(
            f"split inputs have {s1.shape[-1]}+{s2.shape[-1]} features, "
            f"network expects {t['W1'].shape[0]}+{t['W2'].shape[0]}"
        )
    if t["Wj"].shape[1] != t["W1"].shape[1]:
        raise ConfigError("split stream: residual width must equal the own-agent upscale width")
    state1 = sigmoid(s1 @ t["W1"] + t["b1"])
    state2 = sigmoid(s2 @ t["W2"] + t["b2"])
    joint = np.concatenate([state1, state2], axis=1)
    pre = joint @ t["Wj"] + t["bj"]
    embedding = np.maximum(pre, 0.0)
    embedding += state1
    q = embedding @ t["Wo"]
    q += t["bo"]
    if cache is not None:
        cache.x = (s1, s2)
        cache.acts.update(state1=state1, state2=state2, joint=joint, pre=pre, embedding=embedding)
    return q[0] if single else q


def q_vector(params: NetworkParams, obs: np.ndarray) -> np.ndarray:
    """Q-values for one observation, skipping the batch bookkeeping of :func:`forward`.

    This sits on the acting path, which runs once per environment step.
    """
    if params.arch != "single" or obs.shape != (params.in_dim,):
        return forward(params, obs)
    t = params.tensors
    h = np.dot(obs.astype(params.dtype, copy=False), t["W1"])
    h += t["b1"]
    sigmoid(h)
    h2 = np.dot(h, t["W2"])
    h2 += t["b2"]
    sigmoid(h2)
    q = np.dot(h2, t["W3"])
    q += t["b3"]
    return q


def forward(params: NetworkParams, obs, cache: Cache | None = None) -> np.ndarray:
    """Dispatch on architecture; split networks slice the full observation themselves."""
    if params.arch == "single":
        return forward_single(params, obs, cache)
    x = np.asarray(obs, dtype=params.dtype)
    if x.shape[-1] != params.in_dim:
        raise UsageError(f"observation has {x.shape[-1]} features, network expects {params.in_dim}")
    return forward_split(params, x[..., params.self_index], x[..., params.other_index], cache)


# -- loss and gradients ---------------------------------------------------

def huber_loss(prediction, target, delta: float = 1.0):
    """Elementwise Huber loss and its derivative with respect to ``prediction``."""
    e = np.asarray(prediction) - np.asarray(target)
    a = np.abs(e)
    loss = np.where(a <= delta, 0.5 * e * e, delta * (a - 0.5 * delta))
    grad = np.clip(e, -delta, delta)
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


def backward(params: NetworkParams, obs, actions, targets, grads: Gradients | None = None):
    """Mean Huber loss over the batch and its gradient for every tensor.

    Only the output unit of each sample's taken action carries loss.
    Returns ``(loss, grads)``; pass ``grads`` to reuse its storage.
    """
    actions = np.asarray(actions, dtype=np.intp)
    n = len(actions)
    if n == 0:
        raise UsageError("backward() needs a non-empty batch")
    if actions.min() < 0 or actions.max() >= params.out_dim:
        raise UsageError(f"action index out of range for {params.out_dim} outputs")
    targets = np.asarray(targets, dtype=params.dtype)

    cache = Cache()
    q = forward(params, np.asarray(obs).reshape(n, -1), cache)
    rows = np.arange(n)
    loss, g = huber_loss(q[rows, actions], targets)
    dq = np.zeros_like(q)
    dq[rows, actions] = g / n
    t, c = params.tensors, cache.acts
    grads = Gradients(params) if grads is None else grads
    G = grads

    if params.arch == "single":
        h1, h2 = c["h1"], c["h2"]
        np.matmul(h2.T, dq, out=G["W3"])
        dq.sum(axis=0, out=G["b3"])
        dz2 = dq @ t["W3"].T
        dz2 *= h2 * (1.0 - h2)
        np.matmul(h1.T, dz2, out=G["W2"])
        dz2.sum(axis=0, out=G["b2"])
        dz1 = dz2 @ t["W2"].T
        dz1 *= h1 * (1.0 - h1)
        np.matmul(cache.x.T, dz1, out=G["W1"])
        dz1.sum(axis=0, out=G["b1"])
    else:
        s1, s2 = cache.x
        state1, state2 = c["state1"], c["state2"]
        u1 = state1.shape[1]
        np.matmul(c["embedding"].T, dq, out=G["Wo"])
        dq.sum(axis=0, out=G["bo"])
        d_emb = dq @ t["Wo"].T
        d_pre = d_emb * (c["pre"] > 0)
        np.matmul(c["joint"].T, d_pre, out=G["Wj"])
        d_pre.sum(axis=0, out=G["bj"])
        d_joint = d_pre @ t["Wj"].T
        dz1 = d_emb + d_joint[:, :u1]
        dz1 *= state1 * (1.0 - state1)
        dz2 = d_joint[:, u1:] * state2 * (1.0 - state2)
        np.matmul(s1.T, dz1, out=G["W1"])
        dz1.sum(axis=0, out=G["b1"])
        np.matmul(s2.T, dz2, out=G["W2"])
        dz2.sum(axis=0, out=G["b2"])
    return float(loss.mean()), grads


# -- optimisation ---------------------------------------------------------

def adam_init(params: NetworkParams, lr=0.01, decay=1e-4, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    return AdamState(np.zeros_like(params.flat), np.zeros_like(params.flat), lr, decay, beta1, beta2, eps)


def adam_step(params: NetworkParams, state: AdamState, grads):
    """One bias-corrected Adam update, in place, with inverse-time learning-rate decay.

    ``grads`` is a :class:`Gradients` or any mapping of per-tensor arrays.
    """
    if isinstance(grads, Gradients):
        g = grads.flat
    else:
        for name, p in params.tensors.items():
            if np.shape(grads[name]) != p.shape:
                raise UsageError(f"gradient for {name} has shape {np.shape(grads[name])}, parameter has {p.shape}")
        g = np.concatenate([np.ravel(grads[name]) for name in params.tensors])
    if g.shape != params.flat.shape:
        raise UsageError("gradient does not match the parameter layout")
    lr = state.current_lr
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    m, v = state.m, state.v
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    step = np.sqrt(v / (1.0 - b2**state.step))
    step += state.eps
    np.divide(m, step, out=step)
    step *= lr / (1.0 - b1**state.step)
    params.flat -= step
    return params, state


def snapshot_params(params: NetworkParams) -> NetworkParams:
    """Independent deep copy; later updates to ``params`` do not reach it."""
    return params.astype(params.dtype)


# -- checkpoints ----------------------------------------------------------

def _header(params: NetworkParams) -> dict:
    h = {
        "arch": params.arch,
        "in_dim": params.in_dim,
        "out_dim": params.out_dim,
        "dtype": params.dtype.name,
        "shapes": {k: list(v) for k, v in params.shapes.items()},
    }
    if params.arch == "split":
        h["self_index"] = params.self_index.tolist()
        h["other_index"] = params.other_index.tolist()
    return h


def save_checkpoint(path, networks: Mapping[str, NetworkParams], meta: dict | None = None) -> Path:
    """Write networks to an ``.npz`` archive.

    Arrays are stored as ``<network>/<layer>`` and a JSON header under
    ``__header__`` records each network's architecture and dimensions plus
    any caller metadata.
    """
    path = Path(path)
    arrays = {}
    header = {"format": "nashdqn-checkpoint/1", "networks": {}, "meta": meta or {}}
    for net_name, params in networks.items():
        header["networks"][net_name] = _header(params)
        for layer, value in params.tensors.items():
            arrays[f"{net_name}/{layer}"] = value
    arrays["__header__"] = np.array(json.dumps(header))
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> tuple[dict[str, NetworkParams], dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["__header__"]))
        networks = {}
        for net_name, h in header["networks"].items():
            tensors = {layer: data[f"{net_name}/{layer}"] for layer in h["shapes"]}
            networks[net_name] = NetworkParams(
                h["arch"], tensors, h["in_dim"], h["out_dim"],
                h.get("self_index"), h.get("other_index"), h.get("dtype", "float64"),
            )
    return networks, header["meta"]
