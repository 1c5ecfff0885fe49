"""Compute and storage cost of the learning agent.

MAC counts assume bias-free dense layers (one multiply-accumulate per
weight per sample). A training round runs the training network on both the
state and the next state of every sampled experience.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

from hsp_lib.c51 import Hyperparams
from hsp_lib.features import n_features, state_bits
from hsp_lib.network import HIDDEN_SIZES
from hsp_lib.replay import record_bits, record_bytes
from hsp_lib.types import PAGE_SIZE

HALF_BYTES = 2
AGENT_STATE_BUDGET_BYTES = int(124.4 * 1024)


def layer_sizes(n_tiers: int = 2, n_atoms: int = 1) -> tuple[int, ...]:
    return (n_features(n_tiers), *HIDDEN_SIZES, n_tiers * n_atoms)


def network_weights(n_tiers: int = 2, n_atoms: int = 1) -> int:
    sizes = layer_sizes(n_tiers, n_atoms)
    return sum(a * b for a, b in zip(sizes, sizes[1:]))


def inference_macs(n_tiers: int = 2, n_atoms: int = 1) -> int:
    """MACs of one forward pass; ``n_atoms=1`` is the expectation-head count."""
    return network_weights(n_tiers, n_atoms)


def training_round_macs(
    n_tiers: int = 2,
    n_atoms: int = 1,
    *,
    n_batches: int = 8,
    batch_size: int = 128,
) -> int:
    return 2 * n_batches * batch_size * inference_macs(n_tiers, n_atoms)


def metadata_overhead(n_tiers: int = 2) -> float:
    """Per-page state bits as a fraction of the page they describe."""
    return state_bits(n_tiers) / (PAGE_SIZE * 8)


@dataclass(frozen=True)
class OverheadReport:
    n_tiers: int
    n_atoms: int
    weights_per_network: int
    inference_macs: int
    training_round_macs: int
    expectation_head_inference_macs: int
    expectation_head_training_round_macs: int
    network_bytes: int
    experience_bits: int
    buffer_bytes: int
    agent_bytes: int
    state_bits: int
    metadata_overhead: float

    @property
    def within_budget(self) -> bool:
        return self.agent_bytes <= AGENT_STATE_BUDGET_BYTES

    def to_dict(self) -> dict[str, int | float | bool]:
        d: dict[str, int | float | bool] = asdict(self)
        d["within_budget"] = self.within_budget
        return d


def overhead_report(hp: Hyperparams, n_tiers: int = 2) -> OverheadReport:
    weights = network_weights(n_tiers, hp.n_atoms)
    network_bytes = weights * HALF_BYTES
    buffer_bytes = hp.buffer_size * record_bytes(n_tiers)
    batches = {"n_batches": hp.n_batches, "batch_size": hp.batch_size}
    return OverheadReport(
        n_tiers=n_tiers,
        n_atoms=hp.n_atoms,
        weights_per_network=weights,
        inference_macs=inference_macs(n_tiers, hp.n_atoms),
        training_round_macs=training_round_macs(n_tiers, hp.n_atoms, **batches),
        expectation_head_inference_macs=inference_macs(n_tiers),
        expectation_head_training_round_macs=training_round_macs(n_tiers, **batches),
        network_bytes=network_bytes,
        experience_bits=record_bits(n_tiers),
        buffer_bytes=buffer_bytes,
        agent_bytes=2 * network_bytes + buffer_bytes,
        state_bits=state_bits(n_tiers),
        metadata_overhead=metadata_overhead(n_tiers),
    )
