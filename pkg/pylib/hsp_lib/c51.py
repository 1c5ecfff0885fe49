"""Categorical (C51) value learning: hyper-parameters, projection, SGD, sync.

The training network is updated with plain SGD on the cross-entropy between
its predicted return distribution for the taken action and a projected
target. The loss is summed over the batch, so every experience gets its own
step at the learning rate. The output layer starts at zero and every action
starts from the same uniform distribution. Targets use a double-DQN
construction: the training network picks the next action, the inference
network (weights frozen between syncs) supplies that action's return
distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hsp_lib.errors import ConfigError, NetworkShapeError, TrainingDivergedError
from hsp_lib.features import normalize_codes
from hsp_lib.network import ValueNetwork, softmax
from hsp_lib.replay import ExperienceBatch, ExperienceBuffer
from hsp_lib.types import BATCH_SIZE, EXPERIENCE_BUFFER_SIZE, N_BATCHES, SYNC_INTERVAL

REWARD_MAX = 1.0  # rewards are latency ratios clamped to [0, 1]


@dataclass(frozen=True)
class Hyperparams:
    gamma: float = 0.9
    learning_rate: float = 1e-4
    epsilon: float = 0.001
    batch_size: int = BATCH_SIZE
    n_batches: int = N_BATCHES
    buffer_size: int = EXPERIENCE_BUFFER_SIZE
    sync_interval: int = SYNC_INTERVAL
    n_atoms: int = 51
    v_min: float = 0.0
    v_max: float | None = None  # None: REWARD_MAX / (1 - gamma)

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"must be in [0, 1), got {self.gamma}", "hyperparams.gamma")
        if not self.learning_rate > 0:
            raise ConfigError(
                f"must be > 0, got {self.learning_rate}", "hyperparams.learning-rate"
            )
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"must be in [0, 1], got {self.epsilon}", "hyperparams.epsilon")
        for name in ("batch_size", "n_batches", "buffer_size", "sync_interval", "n_atoms"):
            if getattr(self, name) < 1:
                raise ConfigError("must be >= 1", f"hyperparams.{name.replace('_', '-')}")
        if self.n_atoms > 1 and not self.v_min < self.support_max:
            raise ConfigError(
                f"v-max {self.support_max} must exceed v-min {self.v_min}", "hyperparams.v-max"
            )

    @property
    def support_max(self) -> float:
        if self.v_max is not None:
            return self.v_max
        return REWARD_MAX / (1.0 - self.gamma)

    def support(self) -> np.ndarray:
        return np.linspace(self.v_min, self.support_max, self.n_atoms)

    def build_network(self, n_inputs: int, n_actions: int, *, seed: int | None) -> ValueNetwork:
        return ValueNetwork(
            n_inputs,
            n_actions,
            self.n_atoms,
            v_min=self.v_min,
            v_max=self.support_max,
            seed=seed,
            zero_head=True,
        )


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------


def c51_project_batch(
    rewards: np.ndarray, next_probs: np.ndarray, gamma: float, support: np.ndarray
) -> np.ndarray:
    """Project ``r + gamma * z`` onto ``support`` for a batch of distributions.

    ``rewards`` has shape (B,), ``next_probs`` (B, n_atoms). The mass of each
    shifted atom is split linearly between its two neighbouring support atoms.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    next_probs = np.atleast_2d(np.asarray(next_probs, dtype=np.float64))
    n = support.shape[0]
    if n == 1:
        return np.ones_like(next_probs)

    v_min, v_max = float(support[0]), float(support[-1])
    delta = (v_max - v_min) / (n - 1)
    tz = np.clip(rewards[:, None] + gamma * support[None, :], v_min, v_max)
    b = np.clip((tz - v_min) / delta, 0.0, n - 1)
    lower = np.floor(b).astype(np.int64)
    upper = np.ceil(b).astype(np.int64)
    exact = lower == upper

    mass_lower = np.where(exact, next_probs, next_probs * (upper - b))
    mass_upper = np.where(exact, 0.0, next_probs * (b - lower))

    out = np.zeros_like(next_probs)
    rows = np.broadcast_to(np.arange(next_probs.shape[0])[:, None], lower.shape)
    np.add.at(out, (rows, lower), mass_lower)
    np.add.at(out, (rows, upper), mass_upper)
    return out


def c51_project(
    reward: float, next_probs: np.ndarray, gamma: float, support: np.ndarray
) -> np.ndarray:
    return c51_project_batch(np.array([reward]), np.asarray(next_probs)[None, :], gamma, support)[0]


# ---------------------------------------------------------------------------
# Acting
# ---------------------------------------------------------------------------


def epsilon_greedy(q: np.ndarray, epsilon: float, rng: np.random.Generator) -> tuple[int, bool]:
    """Return ``(action, explored)``. Greedy ties go to the faster tier."""
    if rng.random() < epsilon:
        return int(rng.integers(0, q.shape[-1])), True
    return int(np.argmax(q)), False


def select_action(q: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    return epsilon_greedy(q, epsilon, rng)[0]


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def categorical_loss(
    net: ValueNetwork, x: np.ndarray, actions: np.ndarray, targets: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    """Cross-entropy of fixed ``targets`` against the taken actions, summed
    over the batch.

    Returns the loss and the gradients of ``net``'s master weights. One SGD
    step on the summed loss moves the weights by the learning rate once per
    experience, as if each experience were applied on its own.
    """
    cache = net.forward_master(x)
    batch = cache.x.shape[0]
    rows = np.arange(batch)
    logits = cache.logits[rows, actions]  # (B, atoms)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-(targets * log_probs).sum())

    dlogits = np.zeros_like(cache.logits)
    dlogits[rows, actions] = softmax(logits) - targets
    return loss, net.backward(cache, dlogits.reshape(batch, -1))


def batch_targets(
    training: ValueNetwork,
    inference: ValueNetwork,
    batch: ExperienceBatch,
    hp: Hyperparams,
    n_tiers: int,
) -> np.ndarray:
    next_x = normalize_codes(batch.next_states, n_tiers)
    q_next = training.forward_master(next_x).probs @ training.support
    next_actions = np.argmax(q_next, axis=1)
    target_probs, _ = inference.forward(next_x)
    chosen = target_probs[np.arange(len(batch)), next_actions]
    return c51_project_batch(batch.rewards, chosen, hp.gamma, inference.support)


def batch_loss(
    training: ValueNetwork,
    inference: ValueNetwork,
    batch: ExperienceBatch,
    hp: Hyperparams,
    n_tiers: int = 2,
) -> float:
    """Mean per-experience cross-entropy of one batch."""
    targets = batch_targets(training, inference, batch, hp, n_tiers)
    loss, _ = categorical_loss(
        training, normalize_codes(batch.states, n_tiers), batch.actions, targets
    )
    return loss / max(len(batch), 1)


def train_step(
    training: ValueNetwork,
    inference: ValueNetwork,
    batches: list[ExperienceBatch],
    hp: Hyperparams,
    n_tiers: int = 2,
) -> float:
    """One SGD step per batch; returns the mean per-experience loss."""
    if not training.same_shape(inference):
        raise NetworkShapeError("training and inference networks differ in shape")
    losses = []
    for batch in batches:
        targets = batch_targets(training, inference, batch, hp, n_tiers)
        loss, grads = categorical_loss(
            training, normalize_codes(batch.states, n_tiers), batch.actions, targets
        )
        if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in grads):
            raise TrainingDivergedError(f"non-finite loss {loss} (check the support range)")
        for w, g in zip(training.masters, grads):
            w -= hp.learning_rate * g
        losses.append(loss / max(len(batch), 1))
    training.refresh_half()
    return float(np.mean(losses)) if losses else 0.0


def train_round(
    training: ValueNetwork,
    inference: ValueNetwork,
    buffer: ExperienceBuffer,
    hp: Hyperparams,
    rng: np.random.Generator,
) -> float:
    """Sample ``n_batches`` batches from a full buffer and train on them."""
    batches = buffer.sample_batches(rng, hp.n_batches, hp.batch_size)
    return train_step(training, inference, batches, hp, buffer.n_tiers)


def sync_weights(training: ValueNetwork, inference: ValueNetwork) -> None:
    """Copy the training network's float16 weights into the inference network."""
    if not training.same_shape(inference):
        raise NetworkShapeError(
            f"cannot sync {training.layer_sizes} into {inference.layer_sizes}"
        )
    inference.load_half(training.half_weights())
