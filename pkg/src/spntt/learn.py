"""Recursive structure learning over binary datasets.

The learner alternates two dataset-matrix operations: slicing rows into
clusters (children of a sum node, weighted by cluster size) and chopping
columns into independent groups (children of a product node, grouped by a
pairwise G-test). Recursion bottoms out in Laplace-smoothed Bernoulli leaves,
so the result is always a valid, normalized SPN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spn import LeafNode, ProductNode, SpnGraph, SumNode


class DatasetError(Exception):
    pass


@dataclass(frozen=True)
class Dataset:
    """N x d matrix of 0/1 values, one row per instance."""

    rows: np.ndarray
    variable_names: tuple[str, ...] | None = None

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.uint8)
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
            raise DatasetError(f"dataset must be a non-empty 2-d array, got shape {rows.shape}")
        if not np.isin(rows, (0, 1)).all():
            raise DatasetError("dataset entries must be 0 or 1")
        if self.variable_names is not None and len(self.variable_names) != rows.shape[1]:
            raise DatasetError("variable_names length does not match column count")
        object.__setattr__(self, "rows", rows)

    @property
    def num_instances(self) -> int:
        return self.rows.shape[0]

    @property
    def num_variables(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class LearnConfig:
    g_test_threshold: float = 4.0
    min_instances_to_slice: int = 50
    num_clusters: int = 2
    laplace_alpha: float = 1.0
    rng_seed: int = 0
    kmeans_restarts: int = 5
    kmeans_max_iter: int = 100

    def __post_init__(self):
        if self.g_test_threshold <= 0:
            raise ValueError("g_test_threshold must be positive")
        if self.num_clusters < 2:
            raise ValueError("num_clusters must be at least 2")
        if self.laplace_alpha < 0:
            raise ValueError("laplace_alpha must be non-negative")


def g_test_counts(counts: np.ndarray) -> float:
    """G statistic from a 2x2 contingency table; empty cells contribute 0."""
    n = counts.sum()
    expected = np.outer(counts.sum(axis=1), counts.sum(axis=0)).astype(np.float64)
    mask = counts > 0
    observed = counts[mask].astype(np.float64)
    contrib = observed * np.log(observed * n / expected[mask])
    return float(2.0 * contrib.sum())


def g_test(data: Dataset, i: int, j: int) -> float:
    """G statistic of independence between binary columns i and j.

    G = 2 * sum_ab n_ab * ln(n_ab * N / (n_a. * n_.b)); large values indicate
    dependence, ~chi^2 with 1 dof under independence.
    """
    if i == j:
        raise ValueError("g_test needs two distinct variables")
    col_i = data.rows[:, i].astype(np.int64)
    col_j = data.rows[:, j].astype(np.int64)
    counts = np.bincount(2 * col_i + col_j, minlength=4).reshape(2, 2)
    return g_test_counts(counts)


def chop(data: Dataset, variables, cfg: LearnConfig) -> list[list[int]]:
    """Partition a variable subset into G-test-connected components.

    Edges join pairs with G above the threshold; a single returned component
    means the subset could not be chopped.
    """
    variables = list(variables)
    if len(variables) < 2:
        raise ValueError("chop needs at least two variables")
    adjacency: dict[int, list[int]] = {v: [] for v in variables}
    for a in range(len(variables)):
        for b in range(a + 1, len(variables)):
            if g_test(data, variables[a], variables[b]) > cfg.g_test_threshold:
                adjacency[variables[a]].append(variables[b])
                adjacency[variables[b]].append(variables[a])
    components: list[list[int]] = []
    seen: set[int] = set()
    for v in variables:
        if v in seen:
            continue
        queue = [v]
        seen.add(v)
        component = []
        while queue:
            u = queue.pop()
            component.append(u)
            for w in adjacency[u]:
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        components.append(sorted(component))
    return components


def _kmeans_once(points: np.ndarray, k: int, rng: np.random.Generator,
                 max_iter: int) -> tuple[np.ndarray, float]:
    unique = np.unique(points, axis=0)
    k_eff = min(k, unique.shape[0])
    centers = unique[rng.choice(unique.shape[0], size=k_eff, replace=False)].astype(np.float64)
    labels = None
    for _ in range(max_iter):
        dists = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        if labels is not None and (new_labels == labels).all():
            break
        labels = new_labels
        for c in range(k_eff):
            member = labels == c
            if member.any():
                centers[c] = points[member].mean(axis=0)
    inertia = float(((points - centers[labels]) ** 2).sum())
    return labels, inertia


def slice_instances(data: Dataset, instances, cfg: LearnConfig,
                    rng: np.random.Generator,
                    variables=None) -> tuple[list[np.ndarray], np.ndarray]:
    """Cluster instance rows; returns non-empty clusters and size weights.

    Seeded k-means with restarts, best inertia kept (ties go to the earliest
    restart). Degenerate data can yield fewer than num_clusters parts; the
    weights always sum to one.
    """
    instances = np.asarray(instances, dtype=np.int64)
    if instances.size < cfg.num_clusters:
        raise ValueError("need at least num_clusters instances to slice")
    cols = np.arange(data.num_variables) if variables is None else np.asarray(list(variables))
    points = data.rows[np.ix_(instances, cols)].astype(np.float64)
    best_labels, best_inertia = None, np.inf
    for _ in range(cfg.kmeans_restarts):
        labels, inertia = _kmeans_once(points, cfg.num_clusters, rng, cfg.kmeans_max_iter)
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    clusters = [instances[best_labels == c] for c in np.unique(best_labels)]
    weights = np.array([len(c) for c in clusters], dtype=np.float64)
    weights /= weights.sum()
    return clusters, weights


def learn_spn(data: Dataset, cfg: LearnConfig | None = None) -> SpnGraph:
    """Learn a valid normalized SPN from a binary dataset.

    Single variable: smoothed Bernoulli leaf. Multiple variables: chop into
    independent groups (product node) when possible, otherwise slice
    instances (sum node) when enough remain; when neither applies, fall back
    to a fully factorized product of leaves. Deterministic given the seed.
    An explicit worklist keeps deep slicing chains off the Python stack.
    """
    cfg = cfg or LearnConfig()
    rng = np.random.default_rng(cfg.rng_seed)
    nodes: dict[int, object] = {}
    next_id = 0

    def fresh_id() -> int:
        nonlocal next_id
        next_id += 1
        return next_id - 1

    def set_leaf(nid: int, variable: int, instances: np.ndarray) -> None:
        ones = int(data.rows[instances, variable].sum())
        p = (ones + cfg.laplace_alpha) / (instances.size + 2 * cfg.laplace_alpha)
        nodes[nid] = LeafNode(variable, float(p))

    def set_factorized(nid: int, variables: list[int], instances: np.ndarray) -> None:
        if len(variables) == 1:
            set_leaf(nid, variables[0], instances)
            return
        child_ids = []
        for v in variables:
            cid = fresh_id()
            set_leaf(cid, v, instances)
            child_ids.append(cid)
        nodes[nid] = ProductNode(tuple(child_ids))

    root = fresh_id()
    worklist: list[tuple[int, list[int], np.ndarray]] = [
        (root, list(range(data.num_variables)), np.arange(data.num_instances))]
    while worklist:
        nid, variables, instances = worklist.pop()
        if instances.size == 0:
            raise DatasetError("internal error: empty instance subset")
        if len(variables) == 1:
            set_leaf(nid, variables[0], instances)
            continue
        local = Dataset(data.rows[np.ix_(instances, np.asarray(variables))])
        raw = chop(local, range(len(variables)), cfg)
        components = [[variables[i] for i in comp] for comp in raw]
        if len(components) > 1:
            child_ids = [fresh_id() for _ in components]
            nodes[nid] = ProductNode(tuple(child_ids))
            for cid, comp in zip(child_ids, components):
                worklist.append((cid, comp, instances))
            continue
        if instances.size >= max(cfg.min_instances_to_slice, cfg.num_clusters):
            clusters, weights = slice_instances(data, instances, cfg, rng,
                                                variables=variables)
            if len(clusters) > 1 and all(c.size < instances.size for c in clusters):
                child_ids = [fresh_id() for _ in clusters]
                nodes[nid] = SumNode(tuple(child_ids), tuple(weights.tolist()))
                for cid, cluster in zip(child_ids, clusters):
                    worklist.append((cid, variables, cluster))
                continue
        set_factorized(nid, variables, instances)

    return SpnGraph(data.num_variables, root, nodes)
