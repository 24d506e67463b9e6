"""Sampler diagnostics: joint-distribution (Geweke) test and potential scale reduction."""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .exceptions import InvalidInputError
from .gibbs import sweep
from .model import (
    ModelConfig,
    ModelState,
    MultiViewDataset,
    SeedLike,
    sample_prior,
    simulate_views,
)

logger = logging.getLogger(__name__)

GEWEKE_STATISTICS = ("sum_H", "sum_W2", "mean_tau", "mean_pi")


def state_statistics(state: ModelState) -> Dict[str, float]:
    """Scalar summaries compared by the Geweke test."""
    return {
        "sum_H": float(state.H.sum()),
        "sum_W2": float(sum(np.sum(w**2) for w in state.W)),
        "mean_tau": float(np.mean(np.concatenate(state.tau))),
        "mean_pi": float(np.mean(state.pi)),
    }


@dataclass
class GewekeStatistic:
    forward_mean: float
    forward_se: float
    conditional_mean: float
    conditional_se: float

    @property
    def z_score(self) -> float:
        se = np.hypot(self.forward_se, self.conditional_se)
        if se == 0:
            return 0.0 if self.forward_mean == self.conditional_mean else np.inf
        return float((self.forward_mean - self.conditional_mean) / se)


def batch_means_se(values: np.ndarray, n_batches: int = 50) -> float:
    """Monte-Carlo standard error of the mean of an autocorrelated series."""
    values = np.asarray(values, dtype=float)
    batch = len(values) // n_batches
    if batch < 1:
        raise InvalidInputError(f"need at least {n_batches} values for batch means")
    means = values[: batch * n_batches].reshape(n_batches, batch).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(n_batches))


def geweke_test(
    config: ModelConfig,
    N: int,
    dims: Sequence[int],
    n_iter: int,
    seed: SeedLike = None,
    n_batches: int = 50,
) -> Dict[str, GewekeStatistic]:
    """Compare forward simulation with successive-conditional simulation.

    Forward draws take (state, data) from the prior and likelihood
    independently. Successive-conditional draws alternate one Gibbs sweep
    given the data with a fresh draw of the data given the state. If every
    conditional is correct both schemes sample the same joint distribution,
    so the statistics in ``GEWEKE_STATISTICS`` share their means.
    """
    rng = np.random.default_rng(seed)
    forward: Dict[str, List[float]] = {name: [] for name in GEWEKE_STATISTICS}
    conditional: Dict[str, List[float]] = {name: [] for name in GEWEKE_STATISTICS}

    for _ in range(n_iter):
        for name, value in state_statistics(sample_prior(config, N, dims, rng)).items():
            forward[name].append(value)

    state = sample_prior(config, N, dims, rng)
    for _ in range(n_iter):
        dataset = MultiViewDataset.from_arrays(simulate_views(state, rng))
        state = sweep(state, dataset, config, rng)
        for name, value in state_statistics(state).items():
            conditional[name].append(value)

    results = {}
    for name in GEWEKE_STATISTICS:
        f = np.asarray(forward[name])
        c = np.asarray(conditional[name])
        results[name] = GewekeStatistic(
            forward_mean=float(f.mean()),
            forward_se=float(f.std(ddof=1) / np.sqrt(len(f))),
            conditional_mean=float(c.mean()),
            conditional_se=batch_means_se(c, n_batches),
        )
        logger.debug("geweke %s: z=%.3f", name, results[name].z_score)
    return results


def gelman_rubin(chains: Sequence[np.ndarray]) -> Optional[float]:
    """Potential scale reduction factor of a scalar traced by several chains.

    Chains are truncated to the shortest length. Returns None when fewer than
    two chains or fewer than two draws per chain are available.
    """
    if len(chains) < 2:
        return None
    length = min(len(c) for c in chains)
    if length < 2:
        return None
    draws = np.stack([np.asarray(c, dtype=float)[:length] for c in chains])
    n_chains = draws.shape[0]

    within = np.mean(np.var(draws, axis=1, ddof=1))
    means = draws.mean(axis=1)
    between = length / (n_chains - 1.0) * np.sum((means - means.mean()) ** 2)
    if within == 0:
        return 1.0 if between == 0 else float("inf")

    pooled = within * (length - 1.0) / length + between * (n_chains + 1.0) / (
        length * n_chains
    )
    return float(np.sqrt(pooled / within))
