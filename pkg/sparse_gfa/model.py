"""Data types and joint density of the sparse group factor analysis model.

Every view ``m`` is an ``N x D_m`` matrix whose rows are generated as

    x_n^(m) ~ N(W^(m) z_n, diag(1 / tau^(m))),        z_n ~ N(0, I_K)

with a group spike-and-slab prior on the loadings

    W_dk^(m) ~ H_k^(m) N(0, 1 / alpha_dk^(m)) + (1 - H_k^(m)) delta_0
    H_k^(m) ~ Bernoulli(pi_k),  pi_k ~ Beta(a_pi, b_pi)
    alpha_dk^(m) ~ Gamma(a_alpha, b_alpha),  tau_d^(m) ~ Gamma(a_tau, b_tau)

Gamma distributions are parameterized by shape and rate throughout.
"""

import logging
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .exceptions import InvalidInputError, NumericalError

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]


@dataclass
class ViewMatrix:
    """One data view: rows are samples, columns are features."""

    name: str
    values: np.ndarray
    feature_names: List[str]
    sample_ids: List[str]

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        self.feature_names = [str(f) for f in self.feature_names]
        self.sample_ids = [str(s) for s in self.sample_ids]
        self.validate()

    def validate(self) -> None:
        if self.values.ndim != 2:
            raise InvalidInputError(f"view {self.name!r}: values must be a 2-D matrix")
        n, d = self.values.shape
        if n < 2 or d < 1:
            raise InvalidInputError(
                f"view {self.name!r}: need at least 2 samples and 1 feature, got {n}x{d}"
            )
        if len(self.sample_ids) != n:
            raise InvalidInputError(
                f"view {self.name!r}: {len(self.sample_ids)} sample ids for {n} rows"
            )
        if len(self.feature_names) != d:
            raise InvalidInputError(
                f"view {self.name!r}: {len(self.feature_names)} feature names for {d} columns"
            )
        if len(set(self.feature_names)) != d:
            raise InvalidInputError(f"view {self.name!r}: feature names are not unique")
        if not np.all(np.isfinite(self.values)):
            row, col = np.argwhere(~np.isfinite(self.values))[0]
            raise InvalidInputError(
                f"view {self.name!r}: non-finite value at sample "
                f"{self.sample_ids[row]!r}, feature {self.feature_names[col]!r}"
            )

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


@dataclass
class MultiViewDataset:
    """M views over the same, identically ordered samples."""

    views: List[ViewMatrix]
    sample_ids: List[str]
    dropped_rows: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.sample_ids = [str(s) for s in self.sample_ids]
        self.validate()

    def validate(self) -> None:
        if len(self.views) < 2:
            raise InvalidInputError(
                f"a multi-view dataset needs at least 2 views, got {len(self.views)}"
            )
        names = [v.name for v in self.views]
        if len(set(names)) != len(names):
            raise InvalidInputError(f"view names are not unique: {names}")
        for view in self.views:
            if view.sample_ids != self.sample_ids:
                raise InvalidInputError(
                    f"view {view.name!r} is not paired with the dataset sample order"
                )

    @classmethod
    def from_arrays(
        cls,
        arrays: Sequence[np.ndarray],
        view_names: Optional[Sequence[str]] = None,
        sample_ids: Optional[Sequence[str]] = None,
    ) -> "MultiViewDataset":
        """Wrap plain arrays, generating sample and feature labels as needed."""
        arrays = [np.asarray(a, dtype=float) for a in arrays]
        if not arrays:
            raise InvalidInputError("no views given")
        n = arrays[0].shape[0]
        names = list(view_names) if view_names else [f"view{m}" for m in range(len(arrays))]
        ids = list(sample_ids) if sample_ids else [f"s{i:04d}" for i in range(n)]
        views = [
            ViewMatrix(
                name=name,
                values=values,
                feature_names=[f"{name}_f{d:04d}" for d in range(values.shape[1])],
                sample_ids=ids,
            )
            for name, values in zip(names, arrays)
        ]
        return cls(views=views, sample_ids=ids)

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def n_samples(self) -> int:
        return len(self.sample_ids)

    @property
    def dims(self) -> List[int]:
        return [v.n_features for v in self.views]

    @property
    def view_names(self) -> List[str]:
        return [v.name for v in self.views]

    def arrays(self) -> List[np.ndarray]:
        return [v.values for v in self.views]


@dataclass(frozen=True)
class ModelConfig:
    """Component budget and prior hyperparameters."""

    K: int = 80
    a_pi: float = 1.0
    b_pi: float = 1.0
    a_alpha: float = 1e-3
    b_alpha: float = 1e-3
    a_tau: float = 1e-3
    b_tau: float = 1e-3
    center_columns: bool = True
    scale_columns: bool = False

    def validate(self) -> None:
        if int(self.K) != self.K or self.K < 1:
            raise InvalidInputError(f"K must be a positive integer, got {self.K}")
        for name in ("a_pi", "b_pi", "a_alpha", "b_alpha", "a_tau", "b_tau"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise InvalidInputError(f"{name} must be positive, got {value}")

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "ModelConfig":
        try:
            return cls(**data)  # type: ignore[arg-type]
        except TypeError as e:
            raise InvalidInputError(f"invalid model configuration: {e}")


@dataclass
class ModelState:
    """One full assignment of the model's latent variables."""

    Z: np.ndarray
    W: List[np.ndarray]
    H: np.ndarray
    pi: np.ndarray
    alpha: List[np.ndarray]
    tau: List[np.ndarray]

    @property
    def K(self) -> int:
        return self.Z.shape[1]

    @property
    def n_views(self) -> int:
        return len(self.W)

    def copy(self) -> "ModelState":
        return ModelState(
            Z=self.Z.copy(),
            W=[w.copy() for w in self.W],
            H=self.H.copy(),
            pi=self.pi.copy(),
            alpha=[a.copy() for a in self.alpha],
            tau=[t.copy() for t in self.tau],
        )

    def spike_consistent(self) -> bool:
        """True iff H[m, k] == 0 exactly when column k of W^(m) is all zeros."""
        for m, w in enumerate(self.W):
            zero_columns = ~np.any(w != 0.0, axis=0)
            if np.any(zero_columns != (self.H[m] == 0)):
                return False
        return True

    def validate(self, dataset: Optional[MultiViewDataset] = None) -> None:
        """Check shapes and the state invariants; raise InvalidInputError otherwise."""
        n, k = self.Z.shape
        m = len(self.W)
        if self.H.shape != (m, k):
            raise InvalidInputError(f"H has shape {self.H.shape}, expected {(m, k)}")
        if self.pi.shape != (k,):
            raise InvalidInputError(f"pi has shape {self.pi.shape}, expected {(k,)}")
        if len(self.alpha) != m or len(self.tau) != m:
            raise InvalidInputError("alpha and tau must have one entry per view")
        for i, w in enumerate(self.W):
            if w.ndim != 2 or w.shape[1] != k:
                raise InvalidInputError(f"W[{i}] has shape {w.shape}, expected (D, {k})")
            if self.alpha[i].shape != w.shape:
                raise InvalidInputError(f"alpha[{i}] does not match W[{i}]")
            if self.tau[i].shape != (w.shape[0],):
                raise InvalidInputError(f"tau[{i}] does not match W[{i}]")
            if np.any(self.alpha[i] <= 0) or np.any(self.tau[i] <= 0):
                raise InvalidInputError(f"alpha and tau of view {i} must be positive")
        if np.any((self.pi <= 0) | (self.pi >= 1)):
            raise InvalidInputError("pi must lie strictly inside (0, 1)")
        if not np.all(np.isin(self.H, (0, 1))):
            raise InvalidInputError("H must be binary")
        if not self.spike_consistent():
            raise InvalidInputError("H and W disagree on which loading columns are zero")
        if dataset is not None:
            if dataset.n_views != m:
                raise InvalidInputError(
                    f"state has {m} views, dataset has {dataset.n_views}"
                )
            if dataset.n_samples != n:
                raise InvalidInputError(
                    f"state has {n} samples, dataset has {dataset.n_samples}"
                )
            for i, view in enumerate(dataset.views):
                if self.W[i].shape[0] != view.n_features:
                    raise InvalidInputError(
                        f"W[{i}] has {self.W[i].shape[0]} rows, view "
                        f"{view.name!r} has {view.n_features} features"
                    )


@dataclass
class SyntheticTruth:
    """Ground truth behind a synthetic dataset."""

    state: ModelState
    activity: np.ndarray


def _check_dataset(dataset: MultiViewDataset) -> None:
    if not isinstance(dataset, MultiViewDataset):
        raise InvalidInputError("expected a MultiViewDataset")
    dataset.validate()


def initialize_state(
    config: ModelConfig, dataset: MultiViewDataset, seed: SeedLike = None
) -> ModelState:
    """Starting state: every component active, random scores and small loadings."""
    config.validate()
    _check_dataset(dataset)
    rng = np.random.default_rng(seed)

    n, k = dataset.n_samples, config.K
    Z = rng.standard_normal((n, k))
    W = [rng.normal(0.0, 0.1, size=(d, k)) for d in dataset.dims]
    H = np.ones((dataset.n_views, k), dtype=np.int8)
    pi = np.full(k, config.a_pi / (config.a_pi + config.b_pi))
    alpha = [np.full((d, k), config.a_alpha / config.b_alpha) for d in dataset.dims]
    tau = [np.full(d, config.a_tau / config.b_tau) for d in dataset.dims]

    return ModelState(Z=Z, W=W, H=H, pi=pi, alpha=alpha, tau=tau)


def _finite_or_raise(value: float, term: str, where: str = "") -> float:
    if not np.isfinite(value):
        location = f" in {where}" if where else ""
        raise NumericalError(f"non-finite {term} term{location}: {value}")
    return float(value)


def log_density_terms(
    state: ModelState, dataset: MultiViewDataset, config: ModelConfig
) -> Dict[str, float]:
    """Named additive terms of log p(X, Z, W, H, pi, alpha, tau)."""
    state.validate(dataset)
    names = dataset.view_names

    likelihood = 0.0
    loadings = 0.0
    alpha_term = 0.0
    tau_term = 0.0
    for m, view in enumerate(dataset.views):
        w, tau, alpha = state.W[m], state.tau[m], state.alpha[m]
        resid = view.values - state.Z @ w.T
        n = view.n_samples
        view_ll = np.sum(
            0.5 * n * (np.log(tau) - LOG_2PI) - 0.5 * tau * np.sum(resid**2, axis=0)
        )
        likelihood += _finite_or_raise(view_ll, "likelihood", f"view {names[m]!r}")

        active = state.H[m] == 1
        if np.any(active):
            wa, aa = w[:, active], alpha[:, active]
            slab = 0.5 * np.sum(np.log(aa) - LOG_2PI - aa * wa**2)
            loadings += _finite_or_raise(slab, "loadings", f"view {names[m]!r}")

        alpha_term += _finite_or_raise(
            np.sum(stats.gamma.logpdf(alpha, config.a_alpha, scale=1.0 / config.b_alpha)),
            "alpha prior",
            f"view {names[m]!r}",
        )
        tau_term += _finite_or_raise(
            np.sum(stats.gamma.logpdf(tau, config.a_tau, scale=1.0 / config.b_tau)),
            "tau prior",
            f"view {names[m]!r}",
        )

    latents = -0.5 * np.sum(state.Z**2) - 0.5 * state.Z.size * LOG_2PI
    activity = np.sum(
        state.H * np.log(state.pi) + (1 - state.H) * np.log1p(-state.pi)
    )
    pi_term = np.sum(stats.beta.logpdf(state.pi, config.a_pi, config.b_pi))

    return {
        "likelihood": likelihood,
        "latents": _finite_or_raise(latents, "latents"),
        "loadings": loadings,
        "activity": _finite_or_raise(activity, "activity"),
        "pi": _finite_or_raise(pi_term, "pi prior"),
        "alpha": alpha_term,
        "tau": tau_term,
    }


def joint_log_density(
    state: ModelState, dataset: MultiViewDataset, config: ModelConfig
) -> float:
    """Joint log density of data and all latent variables."""
    return float(sum(log_density_terms(state, dataset, config).values()))


def variance_explained(
    state: ModelState, dataset: Optional[MultiViewDataset] = None
) -> np.ndarray:
    """Total squared contribution ||z_k w_k^T||_F^2 of each component, summed over views."""
    state.validate(dataset)
    z_norms = np.sum(state.Z**2, axis=0)
    w_norms = sum(np.sum(w**2, axis=0) for w in state.W)
    return z_norms * w_norms


def generate_synthetic(
    config: ModelConfig,
    N: int,
    dims: Sequence[int],
    activity: np.ndarray,
    snr: float,
    seed: SeedLike = None,
    view_names: Optional[Sequence[str]] = None,
) -> Tuple[MultiViewDataset, SyntheticTruth]:
    """Draw a dataset from the model with a fixed activity pattern.

    Active loading entries are standard normal, so a view's expected signal
    variance is the mean over its features of sum_k W_dk^2; the noise variance
    of the view is that value divided by ``snr`` (1.0 for a view with no
    active component).
    """
    config.validate()
    activity = np.asarray(activity)
    dims = [int(d) for d in dims]
    if snr <= 0 or not np.isfinite(snr):
        raise InvalidInputError(f"snr must be positive, got {snr}")
    if N < 2:
        raise InvalidInputError(f"N must be at least 2, got {N}")
    if any(d < 1 for d in dims):
        raise InvalidInputError(f"every view needs at least one feature, got {dims}")
    if activity.shape != (len(dims), config.K):
        raise InvalidInputError(
            f"activity has shape {activity.shape}, expected {(len(dims), config.K)}"
        )
    if not np.all(np.isin(activity, (0, 1))):
        raise InvalidInputError("activity must be binary")

    rng = np.random.default_rng(seed)
    k = config.K
    H = activity.astype(np.int8)
    Z = rng.standard_normal((N, k))

    W, tau, arrays = [], [], []
    for m, d in enumerate(dims):
        w = rng.standard_normal((d, k)) * H[m]
        signal_var = float(np.mean(np.sum(w**2, axis=1)))
        noise_var = signal_var / snr if signal_var > 0 else 1.0
        noise = rng.normal(0.0, np.sqrt(noise_var), size=(N, d))
        arrays.append(Z @ w.T + noise)
        W.append(w)
        tau.append(np.full(d, 1.0 / noise_var))

    n_active = H.sum(axis=0)
    pi = (config.a_pi + n_active) / (config.a_pi + config.b_pi + len(dims))
    state = ModelState(
        Z=Z,
        W=W,
        H=H,
        pi=pi,
        alpha=[np.ones((d, k)) for d in dims],
        tau=tau,
    )
    dataset = MultiViewDataset.from_arrays(arrays, view_names=view_names)
    logger.debug("generated %d views over %d samples", len(dims), N)
    return dataset, SyntheticTruth(state=state, activity=H.copy())


def sample_prior(
    config: ModelConfig, N: int, dims: Sequence[int], seed: SeedLike = None
) -> ModelState:
    """Forward draw of every latent variable from its prior.

    Meant for proper priors; with very small Gamma shapes the draws of alpha
    and tau underflow to zero.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    k = config.K
    pi = rng.beta(config.a_pi, config.b_pi, size=k)
    H = (rng.random((len(dims), k)) < pi).astype(np.int8)
    alpha = [rng.gamma(config.a_alpha, 1.0 / config.b_alpha, size=(d, k)) for d in dims]
    W = [
        rng.standard_normal((d, k)) / np.sqrt(a) * H[m]
        for m, (d, a) in enumerate(zip(dims, alpha))
    ]
    tau = [rng.gamma(config.a_tau, 1.0 / config.b_tau, size=d) for d in dims]
    Z = rng.standard_normal((N, k))
    return ModelState(Z=Z, W=W, H=H, pi=pi, alpha=alpha, tau=tau)


def simulate_views(state: ModelState, seed: SeedLike = None) -> List[np.ndarray]:
    """Draw data matrices from the likelihood given a full state."""
    rng = np.random.default_rng(seed)
    n = state.Z.shape[0]
    return [
        state.Z @ w.T + rng.standard_normal((n, w.shape[0])) / np.sqrt(tau)
        for w, tau in zip(state.W, state.tau)
    ]
