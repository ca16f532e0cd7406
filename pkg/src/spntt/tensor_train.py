"""Non-negative tensor trains over binary modes.

A train of d cores, core k shaped (R_k, 2, R_{k+1}) with boundary ranks 1,
represents the multilinear function

    f(x) = scale * (F1 x2 s_1) (F2 x2 s_2) ... (Fd x2 s_d),

where s_k = (x_k, xbar_k) is the indicator pair of variable k. All core
entries stay non-negative through every operation here. The canonical
("normalized") form keeps left-normalized cores, then a mixed core whose
entries sum to one, then right-normalized cores, so the core chain alone has
partition value 1; the running ``scale`` records whatever total mass was
divided out, keeping the represented function unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .spn import Rank1Term
from .states import Assignment, enumerate_states, pairs_from_bits

FULL_TENSOR_LIMIT = 20
KHATRI_RAO_LIMIT = 12


class TensorTrainError(Exception):
    pass


@dataclass(frozen=True)
class TensorTrain:
    cores: tuple[np.ndarray, ...]
    scale: float = 1.0

    def __post_init__(self):
        cores = tuple(np.asarray(c, dtype=np.float64) for c in self.cores)
        if not cores:
            raise TensorTrainError("tensor train needs at least one core")
        for k, core in enumerate(cores):
            if core.ndim != 3 or core.shape[1] != 2:
                raise TensorTrainError(
                    f"core {k} must have shape (R_k, 2, R_k+1), got {core.shape}")
            if np.any(core < 0):
                raise TensorTrainError(f"core {k} has negative entries")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise TensorTrainError("boundary ranks must equal 1")
        for k in range(len(cores) - 1):
            if cores[k].shape[2] != cores[k + 1].shape[0]:
                raise TensorTrainError(
                    f"rank mismatch between cores {k} and {k + 1}: "
                    f"{cores[k].shape[2]} vs {cores[k + 1].shape[0]}")
        if self.scale < 0:
            raise TensorTrainError("scale must be non-negative")
        object.__setattr__(self, "cores", cores)
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def d(self) -> int:
        return len(self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(c.shape[0] for c in self.cores) + (1,)


def _chain_eval(cores, sel: np.ndarray) -> np.ndarray:
    """Contract each core with its (n, 2) mode vectors; returns (n,) values."""
    n = sel.shape[0]
    acc = np.ones((n, 1))
    for k, core in enumerate(cores):
        acc = np.einsum("nr,rjs,nj->ns", acc, core, sel[:, k, :], optimize=True)
    return acc[:, 0]


def tt_eval(tt: TensorTrain, a: Assignment) -> float:
    """Evaluate the represented function at one assignment."""
    if a.num_variables != tt.d:
        raise TensorTrainError(f"assignment has {a.num_variables} variables, TT has {tt.d}")
    return tt.scale * float(_chain_eval(tt.cores, a.pairs[None, :, :])[0])


def tt_eval_states(tt: TensorTrain, bits: np.ndarray) -> np.ndarray:
    """Evaluate a batch of complete states given as an (n, d) 0/1 array."""
    bits = np.asarray(bits)
    if bits.ndim != 2 or bits.shape[1] != tt.d:
        raise TensorTrainError(f"expected states of shape (n, {tt.d}), got {bits.shape}")
    return tt.scale * _chain_eval(tt.cores, pairs_from_bits(bits))


def tt_partition(tt: TensorTrain) -> float:
    """Value with every pair (1,1); 1 for a canonical train with scale 1."""
    return tt_eval(tt, Assignment.all_ones(tt.d))


def tt_full(tt: TensorTrain, limit: int = FULL_TENSOR_LIMIT, chunk: int = 1 << 14) -> np.ndarray:
    """Materialize the full (2,)*d tensor by evaluating every mode index.

    Mode index 0 is the x slot and 1 the xbar slot, so entry (j_1..j_d)
    equals the value at the complete state x = 1 - j. Oracle use only; the
    ``limit`` guard refuses d where 2^d entries are not materializable.
    """
    if tt.d > limit:
        raise TensorTrainError(f"refusing to materialize 2^{tt.d} entries (limit d <= {limit})")
    total = 1 << tt.d
    flat = np.empty(total)
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        modes = enumerate_states(tt.d, start, stop)
        flat[start:stop] = tt_eval_states(tt, 1 - modes)
    return flat.reshape((2,) * tt.d, order="F")


def tt_from_rank1_sum(terms) -> TensorTrain:
    """Stack rank-1 terms into one train with interior ranks = len(terms).

    Each term contributes a diagonal block; its coefficient is absorbed into
    the first core so serialization is deterministic. Evaluation equals the
    sum of the terms' products exactly.
    """
    terms = list(terms)
    if not terms:
        raise TensorTrainError("need at least one rank-1 term")
    d = terms[0].leaf_vectors.shape[0]
    for t in terms:
        if t.leaf_vectors.shape != (d, 2):
            raise TensorTrainError("terms disagree on the number of variables")
        if t.coefficient < 0 or np.any(t.leaf_vectors < 0):
            raise TensorTrainError("rank-1 terms must be non-negative")
    tau = len(terms)
    if d == 1:
        core = sum(t.coefficient * t.leaf_vectors[0] for t in terms).reshape(1, 2, 1)
        return TensorTrain((core,))
    first = np.zeros((1, 2, tau))
    last = np.zeros((tau, 2, 1))
    for t_idx, term in enumerate(terms):
        first[0, :, t_idx] = term.coefficient * term.leaf_vectors[0]
        last[t_idx, :, 0] = term.leaf_vectors[d - 1]
    cores = [first]
    for k in range(1, d - 1):
        middle = np.zeros((tau, 2, tau))
        for t_idx, term in enumerate(terms):
            middle[t_idx, :, t_idx] = term.leaf_vectors[k]
        cores.append(middle)
    cores.append(last)
    return TensorTrain(tuple(cores))


def left_normalize_step(tt: TensorTrain, k: int,
                        zero_tol: float = 0.0) -> tuple[TensorTrain, int]:
    """Left-normalize core k (0-based, k < d-1), shrinking zero slices.

    Vertical slice sums b of core k are divided out and pushed into core
    k+1; slices with b <= zero_tol are removed from both cores. The
    represented function is unchanged.
    """
    if not 0 <= k < tt.d - 1:
        raise TensorTrainError(f"left step needs 0 <= k < d-1, got k={k}, d={tt.d}")
    b = tt.cores[k].sum(axis=(0, 1))
    keep = b > zero_tol
    if not keep.any():
        raise TensorTrainError(f"model collapsed: every slice of core {k} sums to zero")
    removed = int((~keep).sum())
    new_k = tt.cores[k][:, :, keep] / b[keep]
    new_k1 = tt.cores[k + 1][keep, :, :] * b[keep][:, None, None]
    cores = list(tt.cores)
    cores[k] = new_k
    cores[k + 1] = new_k1
    return TensorTrain(tuple(cores), tt.scale), removed


def right_normalize_step(tt: TensorTrain, k: int,
                         zero_tol: float = 0.0) -> tuple[TensorTrain, int]:
    """Mirror of :func:`left_normalize_step` for core k (0-based, k > 0)."""
    if not 0 < k <= tt.d - 1:
        raise TensorTrainError(f"right step needs 0 < k <= d-1, got k={k}, d={tt.d}")
    b = tt.cores[k].sum(axis=(1, 2))
    keep = b > zero_tol
    if not keep.any():
        raise TensorTrainError(f"model collapsed: every slice of core {k} sums to zero")
    removed = int((~keep).sum())
    new_k = tt.cores[k][keep, :, :] / b[keep][:, None, None]
    new_km1 = tt.cores[k - 1][:, :, keep] * b[keep]
    cores = list(tt.cores)
    cores[k] = new_k
    cores[k - 1] = new_km1
    return TensorTrain(tuple(cores), tt.scale), removed


def canonicalize(tt: TensorTrain, mixed_index: int = 0,
                 zero_tol: float = 0.0) -> TensorTrain:
    """Bring the train into normalized form around the mixed core.

    Cores left of ``mixed_index`` (0-based) become left-normalized, cores
    right of it right-normalized, and the mixed core is divided by its total
    entry sum, which is folded into ``scale``. The represented function is
    preserved exactly; the core chain's own partition value becomes 1.
    """
    if not 0 <= mixed_index < tt.d:
        raise TensorTrainError(f"mixed_index must lie in [0, {tt.d}), got {mixed_index}")
    out = tt
    for k in range(mixed_index):
        out, _ = left_normalize_step(out, k, zero_tol)
    for k in range(tt.d - 1, mixed_index, -1):
        out, _ = right_normalize_step(out, k, zero_tol)
    total = out.cores[mixed_index].sum()
    if total <= 0.0:
        raise TensorTrainError("zero partition function: cannot canonicalize")
    cores = list(out.cores)
    cores[mixed_index] = cores[mixed_index] / total
    return TensorTrain(tuple(cores), out.scale * total)


def normalized_form_violations(tt: TensorTrain, mixed_index: int,
                               tol: float = 1e-10) -> list[str]:
    """Check the canonical-form slice-sum constraints; empty list iff satisfied."""
    problems = []
    mixed_sum = tt.cores[mixed_index].sum()
    if abs(mixed_sum - 1.0) > tol:
        problems.append(f"mixed core sum {mixed_sum!r} != 1")
    for k in range(mixed_index):
        sums = tt.cores[k].sum(axis=(0, 1))
        if np.max(np.abs(sums - 1.0)) > tol:
            problems.append(f"core {k} not left-normalized (slice sums {sums})")
    for k in range(mixed_index + 1, tt.d):
        sums = tt.cores[k].sum(axis=(1, 2))
        if np.max(np.abs(sums - 1.0)) > tol:
            problems.append(f"core {k} not right-normalized (slice sums {sums})")
    chain_z = _chain_eval(tt.cores, np.ones((1, tt.d, 2)))[0]
    if abs(chain_z - 1.0) > 1e-8:
        problems.append(f"core-chain partition {chain_z!r} != 1")
    return problems


def parameter_count(tt: TensorTrain) -> tuple[int, int]:
    """(total core entries, entries strictly greater than zero)."""
    total = sum(core.size for core in tt.cores)
    nonzero = int(sum(np.count_nonzero(core > 0) for core in tt.cores))
    return total, nonzero


def khatri_rao_system(bits: np.ndarray, tt: TensorTrain,
                      limit: int = KHATRI_RAO_LIMIT) -> np.ndarray:
    """Evaluate sample states through the explicit Khatri-Rao design matrix.

    Builds S column-wise as s_d (x) ... (x) s_1 (last factor's index fastest)
    and returns S^T vec(F) with F vectorized first-index-fastest. Independent
    oracle for the in-train evaluation path; small d only.
    """
    bits = np.asarray(bits)
    d = tt.d
    if d > limit:
        raise TensorTrainError(f"khatri_rao_system limited to d <= {limit}, got {d}")
    if bits.ndim != 2 or bits.shape[1] != d:
        raise TensorTrainError(f"expected states of shape (n, {d}), got {bits.shape}")
    n = bits.shape[0]
    columns = np.ones((1, n))
    for k in range(d):
        s_k = np.stack([bits[:, k], 1 - bits[:, k]]).astype(np.float64)  # (2, n)
        columns = np.einsum("il,jl->ijl", s_k, columns).reshape(-1, n)
    vec_f = tt_full(tt, limit=limit).flatten(order="F")
    return columns.T @ vec_f


def save_tt(tt: TensorTrain, path) -> None:
    payload = {
        "d": tt.d,
        "ranks": list(tt.ranks),
        "scale": tt.scale,
        "cores": [core.flatten(order="C").tolist() for core in tt.cores],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_tt(path) -> TensorTrain:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise TensorTrainError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    try:
        d = int(payload["d"])
        ranks = [int(r) for r in payload["ranks"]]
        scale = float(payload.get("scale", 1.0))
        flats = payload["cores"]
    except (KeyError, TypeError, ValueError) as exc:
        raise TensorTrainError(f"{path}: malformed tensor-train file: {exc}") from exc
    if len(ranks) != d + 1 or len(flats) != d:
        raise TensorTrainError(f"{path}: ranks/cores lengths inconsistent with d={d}")
    cores = []
    for k, flat in enumerate(flats):
        arr = np.asarray(flat, dtype=np.float64)
        expected = ranks[k] * 2 * ranks[k + 1]
        if arr.size != expected:
            raise TensorTrainError(
                f"{path}: core {k} has {arr.size} entries, expected {expected}")
        cores.append(arr.reshape(ranks[k], 2, ranks[k + 1]))
    return TensorTrain(tuple(cores), scale)
