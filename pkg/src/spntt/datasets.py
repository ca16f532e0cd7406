"""Dataset files, ancestral sampling, and seeded random model generation.

Dataset files follow the public density-estimation benchmark layout: plain
text, one instance per line, comma-separated 0/1 values. The random-SPN
builder and the sampler provide ground-truth models for tests and for
synthetic benchmarks at arbitrary variable counts.
"""

from __future__ import annotations

import numpy as np

from .learn import Dataset, DatasetError
from .spn import LeafNode, ProductNode, SpnGraph, SumNode


def load_dataset(path) -> Dataset:
    """Parse a comma-separated 0/1 file; malformed lines report their number."""
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            try:
                values = [int(f) for f in fields]
            except ValueError as exc:
                raise DatasetError(f"{path}: line {lineno}: {exc}") from exc
            if any(v not in (0, 1) for v in values):
                raise DatasetError(f"{path}: line {lineno}: values must be 0 or 1")
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DatasetError(
                    f"{path}: line {lineno}: expected {width} values, got {len(values)}")
            rows.append(values)
    if not rows:
        raise DatasetError(f"{path}: empty dataset")
    return Dataset(np.asarray(rows, dtype=np.uint8))


def save_dataset(data: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in data.rows:
            fh.write(",".join(str(int(v)) for v in row))
            fh.write("\n")


def sample_spn(spn: SpnGraph, n: int, seed: int) -> np.ndarray:
    """Draw n complete states from a normalized SPN by ancestral sampling."""
    rng = np.random.default_rng(seed)
    out = np.zeros((n, spn.num_variables), dtype=np.uint8)
    for i in range(n):
        stack = [spn.root]
        while stack:
            nid = stack.pop()
            node = spn.nodes[nid]
            if isinstance(node, LeafNode):
                out[i, node.variable] = rng.random() < node.p
            elif isinstance(node, ProductNode):
                stack.extend(node.children)
            else:
                weights = np.asarray(node.weights)
                probs = weights / weights.sum()
                stack.append(node.children[rng.choice(len(probs), p=probs)])
    return out


def random_spn(d: int, seed: int, max_sum_children: int = 3,
               leaf_bias: float = 0.3, normalized: bool = True) -> SpnGraph:
    """Build a seeded random valid SPN over d variables.

    Sum nodes mix 2..max_sum_children alternatives over the same scope;
    product nodes split the scope into two random parts. ``leaf_bias``
    controls how eagerly multi-variable scopes collapse into factorized
    products of leaves, which bounds the induced-tree count.
    """
    rng = np.random.default_rng(seed)
    nodes: dict[int, object] = {}
    counter = [0]

    def fresh() -> int:
        counter[0] += 1
        return counter[0] - 1

    def leaf(variable: int) -> int:
        nid = fresh()
        nodes[nid] = LeafNode(int(variable), float(rng.uniform(0.05, 0.95)))
        return nid

    def factorized(variables: np.ndarray) -> int:
        if variables.size == 1:
            return leaf(variables[0])
        nid = fresh()
        nodes[nid] = ProductNode(tuple(leaf(v) for v in variables))
        return nid

    def build_sum(variables: np.ndarray, depth: int) -> int:
        n_children = int(rng.integers(2, max_sum_children + 1))
        child_ids = []
        for _ in range(n_children):
            child_ids.append(build_product(variables, depth))
        weights = rng.uniform(0.2, 1.0, size=n_children)
        if normalized:
            weights = weights / weights.sum()
        nid = fresh()
        nodes[nid] = SumNode(tuple(child_ids), tuple(weights.tolist()))
        return nid

    def build_product(variables: np.ndarray, depth: int) -> int:
        if variables.size == 1:
            return leaf(variables[0])
        if depth <= 0 or rng.random() < leaf_bias:
            return factorized(variables)
        perm = rng.permutation(variables)
        cut = int(rng.integers(1, variables.size))
        parts = [np.sort(perm[:cut]), np.sort(perm[cut:])]
        nid = fresh()
        nodes[nid] = ProductNode(tuple(
            build_sum(part, depth - 1) if part.size > 1 and rng.random() > leaf_bias
            else factorized(part)
            for part in parts))
        return nid

    variables = np.arange(d)
    root = build_sum(variables, depth=3) if d > 1 else leaf(0)
    return SpnGraph(d, root, nodes)


def bernoulli_mixture_spn(d: int, components: int, seed: int,
                          noise: float = 0.12,
                          mix_concentration: float = 0.5) -> SpnGraph:
    """Mixture of noisy binary prototypes as a (valid, normalized) SPN.

    Component j is a product of Bernoulli leaves whose parameters sit near 0
    or 1 (prototype bits flipped with probability ``noise``). Mimics the
    concentrated, strongly correlated joints of the public binary
    benchmarks: a couple of dominant patterns plus bit noise. Small
    ``mix_concentration`` skews the mixture toward few heavy components.
    """
    rng = np.random.default_rng(seed)
    prototypes = rng.integers(0, 2, size=(components, d))
    mix = np.sort(rng.dirichlet(np.full(components, mix_concentration)))[::-1]
    nodes: dict[int, object] = {}
    nid = 0
    product_ids = []
    for j in range(components):
        leaf_ids = []
        for k in range(d):
            p = 1.0 - noise if prototypes[j, k] == 1 else noise
            nodes[nid] = LeafNode(k, float(p))
            leaf_ids.append(nid)
            nid += 1
        nodes[nid] = ProductNode(tuple(leaf_ids))
        product_ids.append(nid)
        nid += 1
    nodes[nid] = SumNode(tuple(product_ids), tuple(mix.tolist()))
    return SpnGraph(d, nid, nodes)


def random_tt(d: int, seed: int, max_rank: int = 4):
    """Seeded random non-negative tensor train for property tests."""
    from .tensor_train import TensorTrain

    rng = np.random.default_rng(seed)
    ranks = [1] + [int(rng.integers(1, max_rank + 1)) for _ in range(d - 1)] + [1]
    cores = tuple(rng.uniform(0.0, 1.0, size=(ranks[k], 2, ranks[k + 1]))
                  for k in range(d))
    return TensorTrain(cores)
