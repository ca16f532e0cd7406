"""Sum-product network graphs: representation, validation, exact inference.

An SPN is a rooted DAG of weighted sum nodes (mixtures), product nodes
(features) and Bernoulli leaves. A leaf over variable k with parameter p
evaluates to p*x_k + (1-p)*xbar_k, so a plain indicator is the special case
p in {0, 1}. Graphs are treated as immutable once built; scopes and the
evaluation order are computed lazily and cached.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .states import Assignment, pairs_from_bits


class SpnError(Exception):
    """Structural error: cycles, dangling children, bad indices."""


class SpnFormatError(SpnError):
    """Model file cannot be parsed into a valid SpnGraph."""


@dataclass(frozen=True)
class SumNode:
    children: tuple[int, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.children) == 0:
            raise SpnError("sum node needs at least one child")
        if len(self.children) != len(self.weights):
            raise SpnError("sum node children/weights length mismatch")
        if any(w < 0 for w in self.weights):
            raise SpnError("sum node weights must be non-negative")


@dataclass(frozen=True)
class ProductNode:
    children: tuple[int, ...]

    def __post_init__(self):
        if len(self.children) == 0:
            raise SpnError("product node needs at least one child")


@dataclass(frozen=True)
class LeafNode:
    variable: int
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise SpnError(f"leaf parameter must lie in [0, 1], got {self.p}")


SpnNode = SumNode | ProductNode | LeafNode


@dataclass(frozen=True)
class Rank1Term:
    """One leaf-terminated induced tree: a coefficient and d length-2 vectors.

    The coefficient is the product of the chosen sum-edge weights; vector k is
    the chosen leaf's (p, 1-p). Summing coefficient * prod_k <v_k, (x_k, xbar_k)>
    over all terms reproduces the SPN value at every assignment.
    """

    coefficient: float
    leaf_vectors: np.ndarray  # (d, 2)


@dataclass
class ValidationReport:
    violations: list[tuple[int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return "; ".join(f"node {nid}: {msg}" for nid, msg in self.violations)


class SpnGraph:
    """Rooted DAG over ``num_variables`` binary variables.

    ``nodes`` maps integer ids to SumNode / ProductNode / LeafNode. The
    constructor checks structural well-formedness (ids resolve, no cycles,
    leaf variables in range); semantic validity (completeness and
    decomposability) is checked by :meth:`validate`.
    """

    def __init__(self, num_variables: int, root: int, nodes: dict[int, SpnNode]):
        if num_variables < 1:
            raise SpnError("num_variables must be >= 1")
        if root not in nodes:
            raise SpnError(f"root id {root} not among nodes")
        self.num_variables = int(num_variables)
        self.root = root
        self.nodes = dict(nodes)
        for nid, node in self.nodes.items():
            if isinstance(node, LeafNode):
                if not 0 <= node.variable < num_variables:
                    raise SpnError(
                        f"node {nid}: leaf variable {node.variable} out of range "
                        f"[0, {num_variables})")
            else:
                for child in node.children:
                    if child not in self.nodes:
                        raise SpnError(f"node {nid}: dangling child id {child}")
        self._order = self._toposort()
        self._scopes: dict[int, frozenset[int]] | None = None

    # -- structure ---------------------------------------------------------

    def _children(self, nid: int) -> tuple[int, ...]:
        node = self.nodes[nid]
        return () if isinstance(node, LeafNode) else node.children

    def _toposort(self) -> list[int]:
        """Children-first order of every node reachable from the root.

        Iterative DFS; raises on cycles (learned SPNs can be deep enough to
        hit the interpreter recursion limit).
        """
        order: list[int] = []
        state: dict[int, int] = {}  # 1 = on stack, 2 = done
        stack: list[tuple[int, int]] = [(self.root, 0)]
        while stack:
            nid, child_idx = stack.pop()
            if child_idx == 0:
                if state.get(nid) == 1:
                    raise SpnError(f"cycle detected through node {nid}")
                if state.get(nid) == 2:
                    continue
                state[nid] = 1
            children = self._children(nid)
            if child_idx < len(children):
                stack.append((nid, child_idx + 1))
                child = children[child_idx]
                if state.get(child) != 2:
                    if state.get(child) == 1:
                        raise SpnError(f"cycle detected through node {child}")
                    stack.append((child, 0))
            else:
                state[nid] = 2
                order.append(nid)
        return order

    def scopes(self) -> dict[int, frozenset[int]]:
        """Variable scope of every reachable node, cached after first call."""
        if self._scopes is None:
            scopes: dict[int, frozenset[int]] = {}
            for nid in self._order:
                node = self.nodes[nid]
                if isinstance(node, LeafNode):
                    scopes[nid] = frozenset((node.variable,))
                else:
                    scopes[nid] = frozenset().union(*(scopes[c] for c in node.children))
            self._scopes = scopes
        return self._scopes

    def validate(self) -> ValidationReport:
        """Check completeness of sums, decomposability of products, coverage.

        Returns a report listing violations per node; the report is empty iff
        the SPN is valid. Structural malformation raises SpnError instead.
        """
        report = ValidationReport()
        scopes = self.scopes()
        reachable = set(self._order)
        for nid in sorted(set(self.nodes) - reachable):
            report.violations.append((nid, "not reachable from root"))
        for nid in self._order:
            node = self.nodes[nid]
            if isinstance(node, SumNode):
                child_scopes = {scopes[c] for c in node.children}
                if len(child_scopes) > 1:
                    report.violations.append(
                        (nid, "sum node not complete: children scopes differ"))
            elif isinstance(node, ProductNode):
                union = frozenset().union(*(scopes[c] for c in node.children))
                if sum(len(scopes[c]) for c in node.children) != len(union):
                    report.violations.append(
                        (nid, "product node not decomposable: children scopes overlap"))
        if scopes[self.root] != frozenset(range(self.num_variables)):
            missing = sorted(set(range(self.num_variables)) - scopes[self.root])
            report.violations.append(
                (self.root, f"root scope does not cover variables {missing}"))
        return report

    def is_valid(self) -> bool:
        return self.validate().ok

    # -- statistics --------------------------------------------------------

    def num_leaves(self) -> int:
        return sum(isinstance(n, LeafNode) for n in self.nodes.values())

    def num_sum_weights(self) -> int:
        return sum(len(n.weights) for n in self.nodes.values() if isinstance(n, SumNode))

    def num_layers(self) -> int:
        """Number of node layers on the longest root-to-leaf path."""
        depth: dict[int, int] = {}
        for nid in self._order:
            children = self._children(nid)
            depth[nid] = 1 + max((depth[c] for c in children), default=0)
        return depth[self.root]

    # -- inference ---------------------------------------------------------

    def evaluate(self, a: Assignment) -> float:
        """Single bottom-up pass; returns S_w(x) >= 0."""
        if a.num_variables != self.num_variables:
            raise SpnError(
                f"assignment has {a.num_variables} variables, SPN has {self.num_variables}")
        return float(self.evaluate_batch(a.pairs[None, :, :])[0])

    def evaluate_batch(self, pairs: np.ndarray) -> np.ndarray:
        """Evaluate many assignments at once; pairs has shape (n, d, 2)."""
        pairs = np.asarray(pairs, dtype=np.float64)
        if pairs.ndim != 3 or pairs.shape[1:] != (self.num_variables, 2):
            raise SpnError(
                f"expected pairs of shape (n, {self.num_variables}, 2), got {pairs.shape}")
        values: dict[int, np.ndarray] = {}
        for nid in self._order:
            node = self.nodes[nid]
            if isinstance(node, LeafNode):
                col = pairs[:, node.variable, :]
                values[nid] = node.p * col[:, 0] + (1.0 - node.p) * col[:, 1]
            elif isinstance(node, ProductNode):
                acc = values[node.children[0]].copy()
                for c in node.children[1:]:
                    acc *= values[c]
                values[nid] = acc
            else:
                acc = node.weights[0] * values[node.children[0]]
                for c, w in zip(node.children[1:], node.weights[1:]):
                    acc = acc + w * values[c]
                values[nid] = acc
        return values[self.root]

    def evaluate_states(self, bits: np.ndarray) -> np.ndarray:
        """Evaluate a batch of complete states given as an (n, d) 0/1 array."""
        return self.evaluate_batch(pairs_from_bits(bits))

    def partition_function(self) -> float:
        """Z = S_w(1); equals 1 for a normalized SPN."""
        return self.evaluate(Assignment.all_ones(self.num_variables))

    def marginal(self, evidence: dict[int, int]) -> float:
        """P(evidence): marginalize free variables via (1,1) pairs, divide by Z."""
        value = self.evaluate(Assignment.from_evidence(self.num_variables, evidence))
        return value / self.partition_function()

    def normalize(self) -> "SpnGraph":
        """Return an equivalent SPN whose sum weights each total one.

        Weight pushing: each sum weight w_i is rescaled by the child's
        partition value over the node's own, so S'(x) = S(x)/Z at every
        assignment and the normalized distribution is untouched.
        """
        z: dict[int, float] = {}
        for nid in self._order:
            node = self.nodes[nid]
            if isinstance(node, LeafNode):
                z[nid] = 1.0
            elif isinstance(node, ProductNode):
                acc = 1.0
                for c in node.children:
                    acc *= z[c]
                z[nid] = acc
            else:
                z[nid] = sum(w * z[c] for c, w in zip(node.children, node.weights))
                if z[nid] <= 0.0:
                    raise SpnError(f"sum node {nid} has zero total weight")
        new_nodes: dict[int, SpnNode] = {}
        for nid, node in self.nodes.items():
            if isinstance(node, SumNode) and nid in z:
                new_nodes[nid] = SumNode(
                    node.children,
                    tuple(w * z[c] / z[nid] for c, w in zip(node.children, node.weights)))
            else:
                new_nodes[nid] = node
        return SpnGraph(self.num_variables, self.root, new_nodes)

    def count_induced_trees(self) -> int:
        """Exact number of leaf-terminated induced trees (arbitrary precision)."""
        counts: dict[int, int] = {}
        for nid in self._order:
            node = self.nodes[nid]
            if isinstance(node, LeafNode):
                counts[nid] = 1
            elif isinstance(node, ProductNode):
                acc = 1
                for c in node.children:
                    acc *= counts[c]
                counts[nid] = acc
            else:
                counts[nid] = sum(counts[c] for c in node.children)
        return counts[self.root]

    def induced_trees(self):
        """Lazily enumerate all leaf-terminated induced trees as Rank1Terms.

        Depth-first: one edge per sum node, all edges per product node. The
        count can be exponential; this is meant for oracle tests and the
        direct TT construction on small SPNs.
        """
        report = self.validate()
        if not report.ok:
            raise SpnError(f"cannot enumerate induced trees of invalid SPN: {report}")
        d = self.num_variables

        def gen(nid):
            node = self.nodes[nid]
            if isinstance(node, LeafNode):
                yield 1.0, ((node.variable, node.p),)
            elif isinstance(node, SumNode):
                for c, w in zip(node.children, node.weights):
                    for coeff, leaves in gen(c):
                        yield w * coeff, leaves
            else:
                def combine(idx):
                    if idx == len(node.children):
                        yield 1.0, ()
                        return
                    for coeff_head, leaves_head in gen(node.children[idx]):
                        for coeff_tail, leaves_tail in combine(idx + 1):
                            yield coeff_head * coeff_tail, leaves_head + leaves_tail
                yield from combine(0)

        for coeff, leaves in gen(self.root):
            vectors = np.empty((d, 2))
            for variable, p in leaves:
                vectors[variable, 0] = p
                vectors[variable, 1] = 1.0 - p
            yield Rank1Term(coeff, vectors)

    def top_induced_trees(self, k: int) -> list[Rank1Term]:
        """The k leaf-terminated induced trees with the largest coefficients.

        Bottom-up k-best enumeration over the DAG: sum nodes merge their
        children's scaled term lists, product nodes combine children lists
        lazily through a heap over index tuples. Deterministic: ties break
        on child order. Returns fewer than k terms when the SPN has fewer
        trees.
        """
        import heapq

        report = self.validate()
        if not report.ok:
            raise SpnError(f"cannot enumerate induced trees of invalid SPN: {report}")
        if k < 1:
            raise ValueError("k must be >= 1")
        best: dict[int, list[tuple[float, tuple]]] = {}
        for nid in self._order:
            node = self.nodes[nid]
            if isinstance(node, LeafNode):
                best[nid] = [(1.0, ((node.variable, node.p),))]
            elif isinstance(node, SumNode):
                merged = []
                for pos, (c, w) in enumerate(zip(node.children, node.weights)):
                    for coeff, leaves in best[c]:
                        merged.append((w * coeff, pos, leaves))
                merged.sort(key=lambda item: (-item[0], item[1]))
                best[nid] = [(coeff, leaves) for coeff, _, leaves in merged[:k]]
            else:
                lists = [best[c] for c in node.children]
                start = (0,) * len(lists)
                coeff0 = 1.0
                for lst in lists:
                    coeff0 *= lst[0][0]
                heap = [(-coeff0, start)]
                seen = {start}
                combined: list[tuple[float, tuple]] = []
                while heap and len(combined) < k:
                    neg, idx = heapq.heappop(heap)
                    leaves: tuple = ()
                    for lst, i in zip(lists, idx):
                        leaves = leaves + lst[i][1]
                    combined.append((-neg, leaves))
                    for pos in range(len(lists)):
                        nxt = idx[:pos] + (idx[pos] + 1,) + idx[pos + 1:]
                        if nxt[pos] < len(lists[pos]) and nxt not in seen:
                            seen.add(nxt)
                            coeff = 1.0
                            for lst, i in zip(lists, nxt):
                                coeff *= lst[i][0]
                            heapq.heappush(heap, (-coeff, nxt))
                best[nid] = combined
        d = self.num_variables
        terms = []
        for coeff, leaves in best[self.root]:
            vectors = np.empty((d, 2))
            for variable, p in leaves:
                vectors[variable, 0] = p
                vectors[variable, 1] = 1.0 - p
            terms.append(Rank1Term(coeff, vectors))
        return terms

    def mpe(self, evidence: dict[int, int] | None = None) -> tuple[np.ndarray, float]:
        """Most probable explanation under the given evidence.

        Bottom-up max-product pass (sums become maxes), then a top-down trace
        of argmax branches. Ties break toward the lowest child index, and a
        free leaf at p = 0.5 picks the positive value. Returns the complete
        state and its unnormalized max-product value.
        """
        evidence = evidence or {}
        a = Assignment.from_evidence(self.num_variables, evidence)
        values: dict[int, float] = {}
        best_child: dict[int, int] = {}
        for nid in self._order:
            node = self.nodes[nid]
            if isinstance(node, LeafNode):
                pos = node.p * a.pairs[node.variable, 0]
                neg = (1.0 - node.p) * a.pairs[node.variable, 1]
                values[nid] = max(pos, neg)
            elif isinstance(node, ProductNode):
                acc = 1.0
                for c in node.children:
                    acc *= values[c]
                values[nid] = acc
            else:
                weighted = [w * values[c] for c, w in zip(node.children, node.weights)]
                best = int(np.argmax(weighted))  # argmax keeps the first maximum
                best_child[nid] = node.children[best]
                values[nid] = weighted[best]
        state = np.zeros(self.num_variables, dtype=np.uint8)
        for var, value in evidence.items():
            state[var] = value
        stack = [self.root]
        while stack:
            nid = stack.pop()
            node = self.nodes[nid]
            if isinstance(node, LeafNode):
                if node.variable not in evidence:
                    pos = node.p * a.pairs[node.variable, 0]
                    neg = (1.0 - node.p) * a.pairs[node.variable, 1]
                    state[node.variable] = 1 if pos >= neg else 0
            elif isinstance(node, ProductNode):
                stack.extend(node.children)
            else:
                stack.append(best_child[nid])
        return state, values[self.root]

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        records = []
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            if isinstance(node, SumNode):
                records.append({"id": nid, "type": "sum",
                                "children": list(node.children),
                                "weights": list(node.weights)})
            elif isinstance(node, ProductNode):
                records.append({"id": nid, "type": "product",
                                "children": list(node.children)})
            else:
                records.append({"id": nid, "type": "leaf",
                                "variable": node.variable, "p": node.p})
        return {"num_variables": self.num_variables, "root": self.root, "nodes": records}

    @classmethod
    def from_dict(cls, payload: dict) -> "SpnGraph":
        try:
            num_variables = int(payload["num_variables"])
            root = payload["root"]
            records = payload["nodes"]
        except (KeyError, TypeError) as exc:
            raise SpnFormatError(f"missing or malformed top-level field: {exc}") from exc
        nodes: dict[int, SpnNode] = {}
        for idx, rec in enumerate(records):
            try:
                nid = rec["id"]
                kind = rec["type"]
                if nid in nodes:
                    raise SpnFormatError(f"node record {idx}: duplicate id {nid}")
                if kind == "sum":
                    nodes[nid] = SumNode(tuple(rec["children"]),
                                         tuple(float(w) for w in rec["weights"]))
                elif kind == "product":
                    nodes[nid] = ProductNode(tuple(rec["children"]))
                elif kind == "leaf":
                    nodes[nid] = LeafNode(int(rec["variable"]), float(rec["p"]))
                else:
                    raise SpnFormatError(f"node record {idx} (id {nid}): unknown type {kind!r}")
            except (KeyError, TypeError, ValueError, SpnError) as exc:
                if isinstance(exc, SpnFormatError):
                    raise
                raise SpnFormatError(f"node record {idx}: {exc}") from exc
        try:
            graph = cls(num_variables, root, nodes)
        except SpnError as exc:
            raise SpnFormatError(str(exc)) from exc
        report = graph.validate()
        if not report.ok:
            raise SpnFormatError(f"model violates SPN invariants: {report}")
        return graph

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SpnGraph":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SpnFormatError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
        return cls.from_dict(payload)
