"""Ontology-based validation of component member sets.

Members of a component should sit closer together in an ontology graph than
random compounds. Closeness of two compounds is the inverse of their
shortest-path length, counted as zero beyond a length cutoff L; a set scores
the mean over its distinct pairs, and a curve reports the mean set score for
each L.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Hashable, Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
import pandas as pd

from .exceptions import InvalidInputError, NoResultError, ParseError
from .model import SeedLike

logger = logging.getLogger(__name__)

DEFAULT_LENGTHS = tuple(range(2, 17))


class OntologyGraph:
    """Undirected ontology graph with a designated subset of compound nodes."""

    def __init__(self, graph: nx.Graph, compound_ids: Iterable[Hashable]):
        self.graph = graph
        self.compounds = sorted(set(str(c) for c in compound_ids))
        missing = [c for c in self.compounds if c not in graph]
        if missing:
            raise InvalidInputError(
                f"{len(missing)} compound ids are not graph nodes, e.g. {missing[:5]}"
            )
        self._compound_set = set(self.compounds)
        self._bfs: Dict[Tuple[str, Optional[int]], Dict[str, int]] = {}

    def __contains__(self, node: object) -> bool:
        return node in self.graph

    def is_compound(self, node: str) -> bool:
        return node in self._compound_set

    def distances_from(self, node: str, cutoff: Optional[int] = None) -> Dict[str, int]:
        """Breadth-first path lengths from ``node``, up to ``cutoff`` hops."""
        key = (node, cutoff)
        if key not in self._bfs:
            self._bfs[key] = nx.single_source_shortest_path_length(
                self.graph, node, cutoff=cutoff
            )
        return self._bfs[key]

    def distance(self, u: str, v: str) -> float:
        """Shortest-path length between two nodes; inf when disconnected."""
        for node in (u, v):
            if node not in self.graph:
                raise InvalidInputError(f"unknown node {node!r}")
        return float(self.distances_from(u).get(v, np.inf))


@dataclass
class SimilarityCurve:
    """Mean set similarity per path-length cutoff, with a random baseline."""

    lengths: List[int]
    values: np.ndarray
    baseline_mean: Optional[np.ndarray] = None
    baseline_std: Optional[np.ndarray] = None

    def to_frame(self) -> pd.DataFrame:
        n = len(self.lengths)
        missing = np.full(n, np.nan)
        return pd.DataFrame(
            {
                "L": self.lengths,
                "value": self.values,
                "baseline_mean": self.baseline_mean if self.baseline_mean is not None else missing,
                "baseline_std": self.baseline_std if self.baseline_std is not None else missing,
            }
        )


def build_graph(
    edges: Iterable[Tuple[Hashable, Hashable]], compound_ids: Iterable[Hashable]
) -> OntologyGraph:
    """Validated simple graph from an edge list; repeated edges collapse into one."""
    graph = nx.Graph()
    for u, v in edges:
        u, v = str(u), str(v)
        if not u.strip() or not v.strip():
            raise InvalidInputError("edge labels must not be empty")
        if u == v:
            raise InvalidInputError(f"self-loop on node {u!r}")
        graph.add_edge(u, v)
    compounds = [str(c) for c in compound_ids]
    if any(not c.strip() for c in compounds):
        raise InvalidInputError("compound ids must not be empty")
    return OntologyGraph(graph, compounds)


def _check_lengths(lengths: Sequence[int]) -> List[int]:
    lengths = [int(L) for L in lengths]
    if not lengths or any(b <= a for a, b in zip(lengths, lengths[1:])):
        raise InvalidInputError(f"lengths must be non-empty and strictly increasing: {lengths}")
    if lengths[0] < 1:
        raise InvalidInputError("lengths must be at least 1")
    return lengths


def pair_similarity(graph: OntologyGraph, u: str, v: str, max_len: int) -> float:
    """1 / d(u, v) when the shortest path is at most ``max_len`` long, else 0."""
    if u == v:
        raise InvalidInputError("pair similarity needs two distinct nodes")
    d = graph.distance(u, v)
    return 1.0 / d if d <= max_len else 0.0


def _retained_members(graph: OntologyGraph, members: Iterable[str]) -> List[str]:
    unique = sorted(set(str(m) for m in members))
    retained = [m for m in unique if graph.is_compound(m)]
    if len(retained) < len(unique):
        logger.warning(
            "%d of %d members are not compounds of the graph and were dropped",
            len(unique) - len(retained),
            len(unique),
        )
    return retained


def _set_curve(graph: OntologyGraph, retained: Sequence[str], lengths: List[int]) -> np.ndarray:
    """Mean inverse path length over distinct pairs, one value per cutoff."""
    cutoff = lengths[-1]
    n = len(retained)
    pair_d = []
    for i in range(n):
        reach = graph.distances_from(retained[i], cutoff)
        for j in range(i + 1, n):
            pair_d.append(reach.get(retained[j], np.inf))
    d = np.asarray(pair_d, dtype=float)
    inverse = np.where(np.isfinite(d), 1.0 / d, 0.0)
    within = d[None, :] <= np.asarray(lengths, dtype=float)[:, None]
    return np.mean(np.where(within, inverse[None, :], 0.0), axis=1)


def set_similarity(graph: OntologyGraph, members: Iterable[str], max_len: int) -> float:
    """Average pair similarity over the members present in the graph."""
    retained = _retained_members(graph, members)
    if len(retained) < 2:
        raise NoResultError(f"only {len(retained)} member(s) found in the graph")
    return float(_set_curve(graph, retained, [int(max_len)])[0])


def component_curve(
    graph: OntologyGraph,
    member_sets: Sequence[Iterable[str]],
    lengths: Sequence[int] = DEFAULT_LENGTHS,
) -> SimilarityCurve:
    """Mean over evaluable member sets of their similarity at every cutoff."""
    lengths = _check_lengths(lengths)
    curves = []
    for members in member_sets:
        retained = _retained_members(graph, members)
        if len(retained) >= 2:
            curves.append(_set_curve(graph, retained, lengths))
    if not curves:
        raise NoResultError("no member set has two or more compounds in the graph")
    return SimilarityCurve(lengths=lengths, values=np.mean(curves, axis=0))


def evaluable_sizes(graph: OntologyGraph, member_sets: Sequence[Iterable[str]]) -> List[int]:
    """Sizes of the member sets after dropping non-compounds, evaluable sets only."""
    sizes = [len(_retained_members(graph, members)) for members in member_sets]
    return [s for s in sizes if s >= 2]


def random_baseline(
    graph: OntologyGraph,
    set_sizes: Sequence[int],
    lengths: Sequence[int] = DEFAULT_LENGTHS,
    n_draws: int = 1000,
    rng: SeedLike = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and standard deviation of curves of size-matched random compound sets."""
    lengths = _check_lengths(lengths)
    if n_draws < 2:
        raise InvalidInputError(f"n_draws must be at least 2, got {n_draws}")
    sizes = [int(s) for s in set_sizes]
    if not sizes:
        raise NoResultError("no set sizes to match")
    n_compounds = len(graph.compounds)
    if any(s < 2 for s in sizes):
        raise InvalidInputError("random sets need at least 2 members")
    if max(sizes) > n_compounds:
        raise InvalidInputError(
            f"set size {max(sizes)} exceeds the {n_compounds} compounds of the graph"
        )

    rng = np.random.default_rng(rng)
    compounds = np.asarray(graph.compounds, dtype=object)
    curves = np.empty((n_draws, len(lengths)))
    for draw in range(n_draws):
        per_set = [
            _set_curve(graph, list(rng.choice(compounds, size=s, replace=False)), lengths)
            for s in sizes
        ]
        curves[draw] = np.mean(per_set, axis=0)
    return curves.mean(axis=0), curves.std(axis=0, ddof=1)


def validation_curve(
    graph: OntologyGraph,
    member_sets: Sequence[Iterable[str]],
    lengths: Sequence[int] = DEFAULT_LENGTHS,
    n_draws: int = 1000,
    rng: SeedLike = None,
) -> SimilarityCurve:
    """Component curve together with its size-matched random baseline."""
    curve = component_curve(graph, member_sets, lengths)
    mean, std = random_baseline(
        graph, evaluable_sizes(graph, member_sets), curve.lengths, n_draws, rng
    )
    curve.baseline_mean = mean
    curve.baseline_std = std
    return curve


def load_edge_list(path: Union[str, Path]) -> List[Tuple[str, str]]:
    """Two tab-separated node labels per line."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ParseError(f"cannot read edge list: {e}", str(path))
    edges = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(f"expected 2 fields, found {len(fields)}", str(path), line_no)
        edges.append((fields[0].strip(), fields[1].strip()))
    if not edges:
        raise ParseError("no edges", str(path))
    return edges


def load_compound_ids(path: Union[str, Path]) -> List[str]:
    """One compound id per line."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ParseError(f"cannot read compound ids: {e}", str(path))
    ids = [line.strip() for line in lines if line.strip()]
    if not ids:
        raise ParseError("no compound ids", str(path))
    return ids
