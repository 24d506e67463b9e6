"""Interpretation of a fitted model: activity, component types, ordering,
significant samples, top loadings and cross-chain reproducibility."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from statsmodels.stats.multitest import multipletests

from .exceptions import InvalidInputError, NoResultError
from .gibbs import PosteriorSummary
from .model import SeedLike, variance_explained

logger = logging.getLogger(__name__)

SPECIFIC_PREFIX = "SP"


class ComponentKind(str, Enum):
    SHARED = "shared"
    VIEW_SPECIFIC = "view-specific"
    INACTIVE = "inactive"


@dataclass(frozen=True)
class ComponentClass:
    """Kind of a component; ``role`` names the single role of a view-specific one."""

    kind: ComponentKind
    role: Optional[str] = None


@dataclass
class ViewRoleMap:
    """Declared role of every view, e.g. "chemistry" or "biology"."""

    roles: Dict[str, str]

    @classmethod
    def one_per_view(cls, view_names: Sequence[str]) -> "ViewRoleMap":
        """Each view is its own role, so shared means active in two or more views."""
        return cls({name: name for name in view_names})

    def aligned(self, view_names: Sequence[str]) -> List[str]:
        missing = [v for v in view_names if v not in self.roles]
        if missing:
            raise InvalidInputError(f"no role declared for views {missing}")
        return [self.roles[v] for v in view_names]


@dataclass
class SignificantSample:
    sample_id: str
    score: float
    q_value: float


@dataclass
class Loading:
    feature: str
    weight: float


@dataclass
class TopLoadings:
    entries: List[Loading]
    degenerate: bool = False


@dataclass
class ComponentReport:
    """Everything reported about one non-inactive component."""

    component_id: int
    label: str
    activity: Tuple[int, ...]
    kind: ComponentKind
    role: Optional[str]
    variance: float
    variance_rank: int
    significant_samples: List[SignificantSample] = field(default_factory=list)
    top_loadings: Dict[str, TopLoadings] = field(default_factory=dict)


def activity_matrix(summary: PosteriorSummary, threshold: float = 0.5) -> np.ndarray:
    """Binary M x K matrix: 1 where the posterior activation probability reaches ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise InvalidInputError(f"threshold must lie in [0, 1], got {threshold}")
    return (summary.activity_mean >= threshold).astype(np.int8)


def classify_components(
    activity: np.ndarray, roles: ViewRoleMap, view_names: Optional[Sequence[str]] = None
) -> List[ComponentClass]:
    """Shared, view-specific or inactive, per component.

    Shared needs at least one active view in each of two distinct roles.
    Anything active within one role only is view-specific, labelled with that
    role.
    """
    activity = np.asarray(activity)
    names = list(view_names) if view_names is not None else list(roles.roles)
    if activity.ndim != 2 or activity.shape[0] != len(names):
        raise InvalidInputError(
            f"activity has shape {activity.shape}, expected ({len(names)}, K)"
        )
    view_roles = roles.aligned(names)

    classes = []
    for k in range(activity.shape[1]):
        active_roles = {view_roles[m] for m in np.flatnonzero(activity[:, k])}
        if not active_roles:
            classes.append(ComponentClass(ComponentKind.INACTIVE))
        elif len(active_roles) >= 2:
            classes.append(ComponentClass(ComponentKind.SHARED))
        else:
            classes.append(ComponentClass(ComponentKind.VIEW_SPECIFIC, active_roles.pop()))
    return classes


def order_components(
    variances: Sequence[float], classes: Sequence[ComponentClass]
) -> Dict[int, str]:
    """Labels by descending variance: "1".. for shared, "SP1".. for view-specific.

    Inactive components get no label; equal variances keep component order.
    """
    variances = np.asarray(variances, dtype=float)
    order = np.argsort(-variances, kind="stable")
    labels: Dict[int, str] = {}
    n_shared = n_specific = 0
    for k in order:
        kind = classes[k].kind
        if kind == ComponentKind.SHARED:
            n_shared += 1
            labels[int(k)] = str(n_shared)
        elif kind == ComponentKind.VIEW_SPECIFIC:
            n_specific += 1
            labels[int(k)] = f"{SPECIFIC_PREFIX}{n_specific}"
    return labels


def _null_exceedances(
    thresholds: np.ndarray, pool: np.ndarray, positives: np.ndarray, n_permutations: int
) -> np.ndarray:
    """Count pooled null values >= each threshold.

    A null draw flips the sign of every pooled |score| at random and permutes
    them; the permutation leaves the pooled multiset unchanged, so only the
    number of positive signs each value received matters.
    """
    order = np.argsort(pool, kind="stable")
    sorted_pool = pool[order]
    sorted_pos = positives[order]
    tail = np.concatenate([np.cumsum(sorted_pos[::-1])[::-1], [0]])
    counts = tail[np.searchsorted(sorted_pool, thresholds, side="left")].astype(float)

    # -|v| >= t only when v == 0 and t == 0
    zero_negatives = np.sum(n_permutations - positives[pool == 0])
    counts[thresholds == 0] += zero_negatives
    return counts


def significant_samples(
    scores: np.ndarray,
    n_permutations: int = 10000,
    q_threshold: float = 0.05,
    rng: SeedLike = None,
    sample_ids: Optional[Sequence[str]] = None,
    null_scores: Optional[np.ndarray] = None,
) -> List[SignificantSample]:
    """Samples whose |score| is significant against a sign-flip permutation null.

    p_n = (1 + #null >= |z_n|) / (n_permutations * P + 1) where P is the pooled
    null size (the column itself unless ``null_scores`` is given); q-values
    are Benjamini-Hochberg adjusted. Hits are sorted by |score| descending.
    """
    if n_permutations < 100:
        raise InvalidInputError(f"n_permutations must be at least 100, got {n_permutations}")
    scores = np.asarray(scores, dtype=float).ravel()
    ids = list(sample_ids) if sample_ids is not None else [str(i) for i in range(len(scores))]
    if len(ids) != len(scores):
        raise InvalidInputError("sample_ids and scores differ in length")

    magnitude = np.abs(scores)
    if not np.any(magnitude > 0):
        return []

    pool = magnitude if null_scores is None else np.abs(np.asarray(null_scores, dtype=float).ravel())
    rng = np.random.default_rng(rng)
    positives = rng.binomial(n_permutations, 0.5, size=pool.size)

    exceed = _null_exceedances(magnitude, pool, positives, n_permutations)
    p_values = (1.0 + exceed) / (n_permutations * pool.size + 1.0)
    q_values = multipletests(np.minimum(p_values, 1.0), method="fdr_bh")[1]

    hits = np.flatnonzero(q_values < q_threshold)
    hits = hits[np.argsort(-magnitude[hits], kind="stable")]
    return [
        SignificantSample(sample_id=ids[i], score=float(scores[i]), q_value=float(q_values[i]))
        for i in hits
    ]


def top_loadings(
    weights: np.ndarray, feature_names: Sequence[str], n: int = 30
) -> TopLoadings:
    """The ``n`` largest |weights| with their signs; all-zero columns are degenerate."""
    if n < 1:
        raise InvalidInputError(f"n must be at least 1, got {n}")
    weights = np.asarray(weights, dtype=float).ravel()
    if len(feature_names) != len(weights):
        raise InvalidInputError("feature_names and weights differ in length")
    order = np.argsort(-np.abs(weights), kind="stable")[:n]
    return TopLoadings(
        entries=[Loading(feature=str(feature_names[d]), weight=float(weights[d])) for d in order],
        degenerate=not np.any(weights != 0),
    )


def _abs_correlation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """|Pearson correlation| between the columns of ``a`` and of ``b``; 0 for constant columns."""

    def normalize(x: np.ndarray) -> np.ndarray:
        x = x - x.mean(axis=0)
        norms = np.linalg.norm(x, axis=0)
        out = np.zeros_like(x)
        nonzero = norms > 0
        out[:, nonzero] = x[:, nonzero] / norms[nonzero]
        return out

    return np.abs(normalize(a).T @ normalize(b))


def concatenated_loadings(summary: PosteriorSummary) -> np.ndarray:
    """Posterior mean loadings of all views stacked into one (sum D_m) x K matrix."""
    return np.vstack(summary.mean_state.W)


def chain_similarity(
    summary_a: PosteriorSummary,
    summary_b: PosteriorSummary,
    match_threshold: float = 0.8,
    roles: Optional[ViewRoleMap] = None,
    view_names: Optional[Sequence[str]] = None,
    activity_threshold: float = 0.5,
) -> float:
    """Fraction of A's shared components reproduced in B.

    A's shared components are greedily matched to distinct components of B in
    order of decreasing absolute loading correlation; a match at or above
    ``match_threshold`` counts as reproduced.
    """
    la = concatenated_loadings(summary_a)
    lb = concatenated_loadings(summary_b)
    if la.shape[0] != lb.shape[0]:
        raise InvalidInputError("the two summaries have different feature counts")

    n_views = summary_a.activity_mean.shape[0]
    names = list(view_names) if view_names is not None else [f"view{m}" for m in range(n_views)]
    roles = roles or ViewRoleMap.one_per_view(names)
    classes = classify_components(activity_matrix(summary_a, activity_threshold), roles, names)
    shared = [k for k, c in enumerate(classes) if c.kind == ComponentKind.SHARED]
    if not shared:
        raise NoResultError("the first summary has no shared components")

    corr = _abs_correlation(la[:, shared], lb)
    flat = np.argsort(-corr, axis=None, kind="stable")
    matched_a, matched_b = set(), set()
    best: Dict[int, float] = {}
    for idx in flat:
        i, j = np.unravel_index(idx, corr.shape)
        if i in matched_a or j in matched_b:
            continue
        matched_a.add(i)
        matched_b.add(j)
        best[int(i)] = float(corr[i, j])
        if len(matched_a) == len(shared):
            break

    reproduced = sum(1 for v in best.values() if v >= match_threshold)
    return reproduced / len(shared)


def match_components(
    reference: np.ndarray, estimate: np.ndarray
) -> List[Tuple[int, int, float]]:
    """Optimal one-to-one matching of loading columns on absolute correlation.

    Returns (reference index, estimate index, |correlation|) triples.
    """
    corr = _abs_correlation(np.asarray(reference, float), np.asarray(estimate, float))
    rows, cols = linear_sum_assignment(-corr)
    return [(int(r), int(c), float(corr[r, c])) for r, c in zip(rows, cols)]


def _standardized_columns(scores: np.ndarray) -> np.ndarray:
    std = scores.std(axis=0)
    out = np.zeros_like(scores)
    nonzero = std > 0
    out[:, nonzero] = scores[:, nonzero] / std[nonzero]
    return out


def build_component_reports(
    summary: PosteriorSummary,
    sample_ids: Sequence[str],
    view_names: Sequence[str],
    feature_names: Dict[str, Sequence[str]],
    roles: ViewRoleMap,
    activity_threshold: float = 0.5,
    n_loadings: int = 30,
    q_threshold: float = 0.05,
    n_permutations: int = 10000,
    rng: SeedLike = None,
) -> List[ComponentReport]:
    """Reports for every non-inactive component, ordered by label.

    Sample significance uses a pooled null made of the standardized score
    columns of all non-inactive components.
    """
    rng = np.random.default_rng(rng)
    state = summary.mean_state
    activity = activity_matrix(summary, activity_threshold)
    classes = classify_components(activity, roles, view_names)
    variances = variance_explained(state)
    labels = order_components(variances, classes)

    live = sorted(labels)
    if not live:
        logger.info("no active components")
        return []
    standardized = _standardized_columns(state.Z[:, live])
    position = {sid: i for i, sid in enumerate(sample_ids)}

    ranks = {int(k): r + 1 for r, k in enumerate(np.argsort(-variances, kind="stable"))}
    reports = []
    for column, k in enumerate(live):
        loadings = {
            name: top_loadings(state.W[m][:, k], feature_names[name], n_loadings)
            for m, name in enumerate(view_names)
            if activity[m, k]
        }
        hits = significant_samples(
            standardized[:, column],
            n_permutations=n_permutations,
            q_threshold=q_threshold,
            rng=rng,
            sample_ids=sample_ids,
            null_scores=standardized,
        )
        # report the raw posterior mean score, not the standardized one
        for hit in hits:
            hit.score = float(state.Z[position[hit.sample_id], k])

        reports.append(
            ComponentReport(
                component_id=k,
                label=labels[k],
                activity=tuple(int(a) for a in activity[:, k]),
                kind=classes[k].kind,
                role=classes[k].role,
                variance=float(variances[k]),
                variance_rank=ranks[k],
                significant_samples=hits,
                top_loadings=loadings,
            )
        )

    def sort_key(report: ComponentReport) -> Tuple[int, int]:
        shared = report.kind == ComponentKind.SHARED
        number = int(report.label.replace(SPECIFIC_PREFIX, ""))
        return (0 if shared else 1, number)

    return sorted(reports, key=sort_key)
