"""Bias-free feed-forward value network with a categorical output head.

Layers are ``n_inputs -> 20 -> 30 -> n_actions * n_atoms`` with swish
hidden activations and a per-action softmax over atoms. Weights live twice:
float64 masters that SGD updates, and a float16 snapshot that ``forward``
reads. The snapshot is an immutable tuple replaced in a single assignment,
so a concurrent reader sees either the old or the new weights in full.

Checkpoints are msgpack maps carrying the architecture and the float16
weights; unknown versions and corrupt files load as ``None``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import msgpack
import numpy as np

from hsp_lib.errors import NetworkShapeError

HIDDEN_SIZES = (20, 30)

_CHECKPOINT_VERSION = 1


def sigmoid(x: np.ndarray | float) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def swish(x: np.ndarray | float) -> np.ndarray:
    """x * sigmoid(x)."""
    x = np.asarray(x, dtype=np.float64)
    return x * sigmoid(x)


def swish_grad(x: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


class MacCounter:
    """Running count of multiply-accumulate operations."""

    def __init__(self) -> None:
        self.count = 0
        self._lock = threading.Lock()

    def add(self, n: int) -> None:
        with self._lock:
            self.count += n

    def reset(self) -> None:
        with self._lock:
            self.count = 0


@dataclass
class ForwardCache:
    """Activations kept by ``ValueNetwork.forward_master`` for backprop."""

    x: np.ndarray
    pre: list[np.ndarray]  # pre-activations of the hidden layers
    act: list[np.ndarray]  # inputs of each layer: x, h1, h2
    logits: np.ndarray  # (B, A, atoms)
    probs: np.ndarray  # (B, A, atoms)


class ValueNetwork:
    def __init__(
        self,
        n_inputs: int = 6,
        n_actions: int = 2,
        n_atoms: int = 51,
        *,
        v_min: float = 0.0,
        v_max: float = 10.0,
        seed: int | None = 0,
        zero: bool = False,
        zero_head: bool = False,
    ):
        if n_inputs < 1 or n_actions < 1 or n_atoms < 1:
            raise NetworkShapeError("network dimensions must be >= 1")
        if n_atoms > 1 and not v_min < v_max:
            raise NetworkShapeError(f"empty support [{v_min}, {v_max}]")
        self.n_inputs = n_inputs
        self.n_actions = n_actions
        self.n_atoms = n_atoms
        self.v_min = float(v_min)
        self.v_max = float(v_max)
        self.support = np.linspace(self.v_min, self.v_max, n_atoms)
        self.macs = MacCounter()

        sizes = self.layer_sizes
        if zero:
            self.masters = [np.zeros((a, b)) for a, b in zip(sizes, sizes[1:])]
        else:
            # Glorot uniform
            rng = np.random.default_rng(seed)
            self.masters = []
            for fan_in, fan_out in zip(sizes, sizes[1:]):
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                self.masters.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            if zero_head:
                # every action starts from the same uniform return distribution
                self.masters[-1][:] = 0.0
        self._half: tuple[np.ndarray, ...] = ()
        self.refresh_half()

    # -- shape ----------------------------------------------------------------

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.n_inputs, *HIDDEN_SIZES, self.n_actions * self.n_atoms)

    @property
    def n_weights(self) -> int:
        sizes = self.layer_sizes
        return sum(a * b for a, b in zip(sizes, sizes[1:]))

    @property
    def macs_per_forward(self) -> int:
        # bias-free dense layers: one MAC per weight
        return self.n_weights

    def same_shape(self, other: ValueNetwork) -> bool:
        return (
            self.layer_sizes == other.layer_sizes
            and self.n_atoms == other.n_atoms
            and self.v_min == other.v_min
            and self.v_max == other.v_max
        )

    # -- weights ------------------------------------------------------------

    def half_weights(self) -> tuple[np.ndarray, ...]:
        return self._half

    def refresh_half(self) -> None:
        """Republish the float16 snapshot from the masters."""
        snapshot = tuple(w.astype(np.float16) for w in self.masters)
        for w in snapshot:
            w.flags.writeable = False
        self._half = snapshot

    def load_half(self, weights: tuple[np.ndarray, ...]) -> None:
        """Adopt ``weights`` as both snapshot and (widened) masters."""
        expected = [m.shape for m in self.masters]
        if [w.shape for w in weights] != expected:
            raise NetworkShapeError(
                f"weight shapes {[w.shape for w in weights]} != {expected}"
            )
        snapshot = tuple(np.array(w, dtype=np.float16) for w in weights)
        for w in snapshot:
            w.flags.writeable = False
        self.masters = [w.astype(np.float64) for w in snapshot]
        self._half = snapshot

    def storage_bytes(self) -> int:
        return sum(w.nbytes for w in self._half)

    # -- inference ------------------------------------------------------------

    def _run(
        self, x: np.ndarray, weights: tuple[np.ndarray, ...] | list[np.ndarray]
    ) -> ForwardCache:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.n_inputs:
            raise NetworkShapeError(f"expected {self.n_inputs} inputs, got {x.shape[1]}")
        pre: list[np.ndarray] = []
        act = [x]
        h = x
        for w in weights[:-1]:
            z = h @ w.astype(np.float64, copy=False)
            pre.append(z)
            h = swish(z)
            act.append(h)
        logits = h @ weights[-1].astype(np.float64, copy=False)
        logits = logits.reshape(-1, self.n_actions, self.n_atoms)
        probs = softmax(logits)
        self.macs.add(x.shape[0] * self.macs_per_forward)
        return ForwardCache(x=x, pre=pre, act=act, logits=logits, probs=probs)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(probs, q)`` using the float16 snapshot.

        ``x`` is one normalised observation or a batch of them. ``probs`` has
        shape ``(..., A, n_atoms)``; ``q`` is the per-action expectation over
        the support.
        """
        single = np.ndim(x) == 1
        cache = self._run(x, self._half)
        q = cache.probs @ self.support
        if single:
            return cache.probs[0], q[0]
        return cache.probs, q

    def forward_master(self, x: np.ndarray) -> ForwardCache:
        """Batched forward pass on the float64 masters, keeping activations."""
        return self._run(x, self.masters)

    def backward(self, cache: ForwardCache, dlogits: np.ndarray) -> list[np.ndarray]:
        """Gradients of the masters given d(loss)/d(logits) of shape (B, A*atoms)."""
        grads: list[np.ndarray] = [np.empty(0)] * len(self.masters)
        delta = dlogits
        for layer in range(len(self.masters) - 1, -1, -1):
            grads[layer] = cache.act[layer].T @ delta
            if layer:
                delta = (delta @ self.masters[layer].T) * swish_grad(cache.pre[layer - 1])
        return grads


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def _serialize(net: ValueNetwork) -> bytes:
    data = {
        "v": _CHECKPOINT_VERSION,
        "arch": list(net.layer_sizes),
        "n_actions": net.n_actions,
        "n_atoms": net.n_atoms,
        "v_min": net.v_min,
        "v_max": net.v_max,
        "weights": [w.astype("<f2").tobytes() for w in net.half_weights()],
    }
    result: bytes = msgpack.packb(data, use_bin_type=True)  # type: ignore[assignment]
    return result


def _deserialize(raw: bytes) -> ValueNetwork | None:
    try:
        data: Any = msgpack.unpackb(raw, raw=False)
    except msgpack.UnpackException, ValueError:
        return None

    if not isinstance(data, dict) or data.get("v") != _CHECKPOINT_VERSION:
        return None

    try:
        arch = [int(n) for n in data["arch"]]
        net = ValueNetwork(
            arch[0],
            int(data["n_actions"]),
            int(data["n_atoms"]),
            v_min=float(data["v_min"]),
            v_max=float(data["v_max"]),
            zero=True,
        )
        if list(net.layer_sizes) != arch:
            return None
        weights = tuple(
            np.frombuffer(blob, dtype="<f2").reshape(a, b)
            for blob, a, b in zip(data["weights"], arch[:-1], arch[1:], strict=True)
        )
        net.load_half(weights)
    except KeyError, TypeError, ValueError, NetworkShapeError:
        return None
    return net


def save_checkpoint(net: ValueNetwork, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(_serialize(net))


def load_checkpoint(path: Path) -> ValueNetwork | None:
    """Load a network checkpoint, or None if missing or unreadable."""
    if not path.exists():
        return None
    try:
        return _deserialize(path.read_bytes())
    except OSError:
        return None
