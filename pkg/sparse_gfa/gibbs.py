"""Gibbs sampler for the sparse group factor analysis model.

Every conditional is the exact conjugate full conditional of the model in
``sparse_gfa.model``. The activity gates are drawn with the loading column
integrated out, followed immediately by a draw of that column, so a gate can
switch on again after it has switched off.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg
from scipy.special import expit

from .exceptions import GFAError, InvalidInputError, NoResultError, NumericalError
from .model import (
    ModelConfig,
    ModelState,
    MultiViewDataset,
    initialize_state,
    joint_log_density,
)

logger = logging.getLogger(__name__)

# Smallest value kept for gamma draws and for pi's distance from 0 and 1.
_TINY = np.finfo(float).tiny
_PI_MAX = 1.0 - np.finfo(float).epsneg


@dataclass(frozen=True)
class SamplingSchedule:
    """Chains, burn-in, retained sweeps, thinning and the master seed."""

    n_chains: int = 10
    burn_in: int = 5000
    n_samples: int = 1000
    thinning: int = 5
    seed: int = 0

    def validate(self) -> None:
        for name in ("n_chains", "n_samples", "thinning"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be at least 1")
        if self.burn_in < 0:
            raise InvalidInputError("burn_in must not be negative")

    @property
    def n_retained(self) -> int:
        return self.n_samples // self.thinning

    def chain_seed(self, chain_index: int) -> int:
        """Seed of one chain, derived from the master seed and the chain index."""
        sequence = np.random.SeedSequence([int(self.seed), int(chain_index)])
        return int(sequence.generate_state(1, dtype=np.uint64)[0])

    def to_dict(self) -> dict:
        return {
            "n_chains": self.n_chains,
            "burn_in": self.burn_in,
            "n_samples": self.n_samples,
            "thinning": self.thinning,
            "seed": self.seed,
        }


@dataclass
class ChainTrace:
    """Retained states and the per-sweep joint log density of one chain."""

    chain_index: int
    seed: int
    burn_in: int
    states: List[ModelState] = field(default_factory=list)
    log_densities: np.ndarray = field(default_factory=lambda: np.zeros(0))
    failed: bool = False
    error: Optional[str] = None

    @property
    def retained_log_densities(self) -> np.ndarray:
        return self.log_densities[self.burn_in :]

    @property
    def mean_log_density(self) -> float:
        values = self.retained_log_densities
        if values.size == 0:
            raise NoResultError(f"chain {self.chain_index} has no post burn-in sweeps")
        return float(np.mean(values))


@dataclass
class PosteriorSummary:
    """Element-wise posterior means over the retained states of one chain."""

    mean_state: ModelState
    activity_mean: np.ndarray
    n_states: int


@dataclass
class ChainSelection:
    """Outcome of choosing the representative chain."""

    selected: int
    ranking: List[int]
    outliers: List[int]
    failed: List[int]
    mean_log_densities: List[Optional[float]]

    @property
    def runner_up(self) -> Optional[int]:
        return self.ranking[1] if len(self.ranking) > 1 else None


def _residuals(state: ModelState, dataset: MultiViewDataset) -> List[np.ndarray]:
    return [x - state.Z @ w.T for x, w in zip(dataset.arrays(), state.W)]


def sample_latents(
    state: ModelState, dataset: MultiViewDataset, rng: np.random.Generator
) -> np.ndarray:
    """Draw every row z_n from N(P^-1 b_n, P^-1), P = I + sum_m W^T diag(tau) W."""
    k = state.K
    precision = np.eye(k)
    projected = np.zeros((dataset.n_samples, k))
    for x, w, tau in zip(dataset.arrays(), state.W, state.tau):
        weighted = w * tau[:, None]
        precision += w.T @ weighted
        projected += x @ weighted

    try:
        chol = linalg.cholesky(precision, lower=True)
    except linalg.LinAlgError as e:
        raise NumericalError(f"latent precision is not positive definite: {e}")

    mean = linalg.cho_solve((chol, True), projected.T).T
    noise = rng.standard_normal((dataset.n_samples, k))
    offsets = linalg.solve_triangular(chol, noise.T, lower=True, trans="T").T
    return mean + offsets


def _draw_loading_column(
    z: np.ndarray,
    resid: np.ndarray,
    alpha: np.ndarray,
    tau: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    precision = alpha + tau * (z @ z)
    mean = tau * (resid.T @ z) / precision
    return mean + rng.standard_normal(mean.shape) / np.sqrt(precision)


def sample_loadings(
    state: ModelState, dataset: MultiViewDataset, rng: np.random.Generator
) -> List[np.ndarray]:
    """Redraw the active loading columns one component at a time."""
    new_w = [w.copy() for w in state.W]
    for m, x in enumerate(dataset.arrays()):
        w = new_w[m]
        resid = x - state.Z @ w.T
        for k in np.flatnonzero(state.H[m] == 1):
            z = state.Z[:, k]
            partial = resid + np.outer(z, w[:, k])
            w[:, k] = _draw_loading_column(
                z, partial, state.alpha[m][:, k], state.tau[m], rng
            )
            resid = partial - np.outer(z, w[:, k])
    return new_w


def activity_log_odds(
    z: np.ndarray,
    resid: np.ndarray,
    alpha: np.ndarray,
    tau: np.ndarray,
    pi: float,
) -> float:
    """Log odds of H=1 against H=0 with the loading column integrated out.

    ``resid`` is the N x D residual with the component removed. For each
    feature the marginal likelihood ratio of slab to spike is
    sqrt(alpha / lam) * exp(b^2 / (2 lam)) with lam = alpha + tau z'z and
    b = tau z'r_d.
    """
    precision = alpha + tau * (z @ z)
    b = tau * (resid.T @ z)
    log_ratio = 0.5 * np.sum(np.log(alpha) - np.log(precision) + b**2 / precision)
    pi = float(np.clip(pi, _TINY, _PI_MAX))
    log_odds = float(log_ratio + np.log(pi) - np.log1p(-pi))
    if not np.isfinite(log_odds):
        raise NumericalError(f"non-finite activity log odds: {log_odds}")
    return log_odds


def sample_activity(
    state: ModelState, dataset: MultiViewDataset, rng: np.random.Generator
) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Collapsed draw of every gate H[m, k], each followed by its loading column."""
    new_h = state.H.copy()
    new_w = [w.copy() for w in state.W]
    for m, x in enumerate(dataset.arrays()):
        w = new_w[m]
        resid = x - state.Z @ w.T
        for k in range(state.K):
            z = state.Z[:, k]
            partial = resid + np.outer(z, w[:, k])
            log_odds = activity_log_odds(
                z, partial, state.alpha[m][:, k], state.tau[m], state.pi[k]
            )
            if rng.random() < expit(log_odds):
                new_h[m, k] = 1
                w[:, k] = _draw_loading_column(
                    z, partial, state.alpha[m][:, k], state.tau[m], rng
                )
            else:
                new_h[m, k] = 0
                w[:, k] = 0.0
            resid = partial - np.outer(z, w[:, k])
    return new_h, new_w


def sample_pi(
    state: ModelState, config: ModelConfig, rng: np.random.Generator
) -> np.ndarray:
    """Draw pi_k ~ Beta(a_pi + s_k, b_pi + M - s_k), s_k active views of k."""
    active = state.H.sum(axis=0)
    pi = rng.beta(config.a_pi + active, config.b_pi + state.n_views - active)
    return np.clip(pi, _TINY, _PI_MAX)


def sample_ard(
    state: ModelState, config: ModelConfig, rng: np.random.Generator
) -> List[np.ndarray]:
    """Draw alpha from Gamma(a + 1/2, b + W^2/2) when active, the prior otherwise."""
    new_alpha = []
    for m, w in enumerate(state.W):
        active = state.H[m][None, :] == 1
        shape = np.where(active, config.a_alpha + 0.5, config.a_alpha)
        rate = config.b_alpha + 0.5 * w**2
        alpha = rng.gamma(np.broadcast_to(shape, w.shape), 1.0 / rate)
        new_alpha.append(np.maximum(alpha, _TINY))
    return new_alpha


def sample_noise(
    state: ModelState,
    dataset: MultiViewDataset,
    config: ModelConfig,
    rng: np.random.Generator,
) -> List[np.ndarray]:
    """Draw tau_d ~ Gamma(a_tau + N/2, b_tau + sum_n residual^2 / 2)."""
    shape = config.a_tau + 0.5 * dataset.n_samples
    new_tau = []
    for resid in _residuals(state, dataset):
        rate = config.b_tau + 0.5 * np.sum(resid**2, axis=0)
        new_tau.append(np.maximum(rng.gamma(shape, 1.0 / rate), _TINY))
    return new_tau


def sweep(
    state: ModelState,
    dataset: MultiViewDataset,
    config: ModelConfig,
    rng: np.random.Generator,
) -> ModelState:
    """One Gibbs sweep: latents, activity, loadings, ARD, pi, noise."""
    new = state.copy()
    new.Z = sample_latents(new, dataset, rng)
    new.H, new.W = sample_activity(new, dataset, rng)
    new.W = sample_loadings(new, dataset, rng)
    new.alpha = sample_ard(new, config, rng)
    new.pi = sample_pi(new, config, rng)
    new.tau = sample_noise(new, dataset, config, rng)
    return new


def run_chain(
    dataset: MultiViewDataset,
    config: ModelConfig,
    schedule: SamplingSchedule,
    chain_index: int,
) -> ChainTrace:
    """Run one chain; a chain that raises comes back marked as failed."""
    schedule.validate()
    config.validate()
    seed = schedule.chain_seed(chain_index)
    trace = ChainTrace(chain_index=chain_index, seed=seed, burn_in=schedule.burn_in)
    rng = np.random.default_rng(seed)
    log_densities: List[float] = []

    try:
        state = initialize_state(config, dataset, rng)
        for sweep_index in range(schedule.burn_in + schedule.n_samples):
            state = sweep(state, dataset, config, rng)
            log_densities.append(joint_log_density(state, dataset, config))
            kept = sweep_index - schedule.burn_in + 1
            if kept > 0 and kept % schedule.thinning == 0:
                trace.states.append(state)
    except GFAError as e:
        trace.failed = True
        trace.error = str(e)
        logger.warning(
            "chain %d failed after %d sweeps: %s", chain_index, len(log_densities), e
        )

    trace.log_densities = np.asarray(log_densities, dtype=float)
    if not trace.failed:
        logger.info(
            "chain %d finished, mean log density %.4f",
            chain_index,
            trace.mean_log_density,
        )
    return trace


def run_chains(
    dataset: MultiViewDataset,
    config: ModelConfig,
    schedule: SamplingSchedule,
    jobs: int = 1,
    on_finish: Optional[Callable[[ChainTrace], None]] = None,
) -> List[ChainTrace]:
    """Run all chains of the schedule, up to ``jobs`` of them at once."""
    schedule.validate()
    chains: Iterable[ChainTrace]
    if jobs == 1:
        chains = (
            run_chain(dataset, config, schedule, i) for i in range(schedule.n_chains)
        )
    else:
        chains = Parallel(n_jobs=jobs, return_as="generator")(
            delayed(run_chain)(dataset, config, schedule, i)
            for i in range(schedule.n_chains)
        )

    traces = []
    for trace in chains:
        traces.append(trace)
        if on_finish is not None:
            on_finish(trace)
    return traces


def chain_selection(traces: List[ChainTrace], mad_factor: float = 3.0) -> ChainSelection:
    """Flag outlier chains and rank the rest by closeness to their mean.

    A chain is an outlier when its mean retained log density is more than
    ``mad_factor`` median absolute deviations away from the median over the
    non-failed chains. Ties go to the lower chain index.
    """
    failed = [i for i, t in enumerate(traces) if t.failed]
    candidates = [i for i, t in enumerate(traces) if not t.failed]
    if not candidates:
        raise NoResultError("every chain failed; nothing to select")

    values = np.array([traces[i].mean_log_density for i in candidates])
    deviation = np.abs(values - np.median(values))
    mad = np.median(deviation)
    is_outlier = deviation > mad_factor * mad

    kept = [i for i, out in zip(candidates, is_outlier) if not out]
    kept_values = values[~is_outlier]
    target = np.mean(kept_values)
    order = np.argsort(np.abs(kept_values - target), kind="stable")
    ranking = [kept[j] for j in order]

    outliers = [i for i, out in zip(candidates, is_outlier) if out]
    if outliers:
        logger.info("outlier chains excluded from selection: %s", outliers)

    means: List[Optional[float]] = [None] * len(traces)
    for i, v in zip(candidates, values):
        means[i] = float(v)
    return ChainSelection(
        selected=ranking[0],
        ranking=ranking,
        outliers=outliers,
        failed=failed,
        mean_log_densities=means,
    )


def select_chain(traces: List[ChainTrace]) -> int:
    """Index of the non-outlier chain closest to the mean of non-outlier chains."""
    return chain_selection(traces).selected


def posterior_summary(
    trace: ChainTrace, activity_threshold: float = 0.5
) -> PosteriorSummary:
    """Posterior means of one chain.

    The summary gate is the mean of H thresholded at ``activity_threshold``
    (ties count as active); loading columns whose summary gate is off are
    zeroed so the mean state keeps the spike invariant.
    """
    if trace.failed:
        raise NoResultError(f"chain {trace.chain_index} failed: {trace.error}")
    states = trace.states
    if not states:
        raise NoResultError(f"chain {trace.chain_index} retained no states")

    def mean_of(arrays: List[np.ndarray]) -> np.ndarray:
        return np.mean(np.stack(arrays), axis=0)

    n_views = states[0].n_views
    activity_mean = mean_of([s.H.astype(float) for s in states])
    H = (activity_mean >= activity_threshold).astype(np.int8)
    W = [mean_of([s.W[m] for s in states]) * H[m] for m in range(n_views)]

    mean_state = ModelState(
        Z=mean_of([s.Z for s in states]),
        W=W,
        H=H,
        pi=mean_of([s.pi for s in states]),
        alpha=[mean_of([s.alpha[m] for s in states]) for m in range(n_views)],
        tau=[mean_of([s.tau[m] for s in states]) for m in range(n_views)],
    )
    return PosteriorSummary(
        mean_state=mean_state, activity_mean=activity_mean, n_states=len(states)
    )
