"""Fit a non-negative tensor train to the probabilities of a learned SPN.

The target vector collects exact SPN probabilities of the training rows plus
randomly generated non-samples (states absent from the dataset, whose
probabilities are mostly near zero). One TT core at a time is refit by
non-negative least squares on rows a_{>k}^T (x) s_k^T (x) a_{<k} built from
cached partial chain products; each update is followed by a normalization
step that pushes slice mass toward the next core and drops all-zero slices,
shrinking ranks. Sweeps alternate forward and backward until the squared
objective stops improving.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .learn import Dataset
from .nnls import nnls
from .spn import SpnGraph
from .states import pairs_from_bits
from .tensor_train import (TensorTrain, TensorTrainError, canonicalize,
                           left_normalize_step, parameter_count,
                           right_normalize_step)


class ConversionError(Exception):
    pass


class ModelCollapseError(ConversionError):
    pass


TRAIN_SAMPLE = "train-sample"
NON_SAMPLE = "non-sample"


@dataclass(frozen=True)
class ConversionConfig:
    initial_rank: int = 10
    non_sample_ratio: float = 1.0
    max_sweeps: int = 50
    rel_tol: float = 1e-6
    rng_seed: int = 0
    y_scaling: str = "none"  # "none" | "max"
    init: str = "trees"      # "trees" | "random"

    def __post_init__(self):
        if self.initial_rank < 1:
            raise ValueError("initial_rank must be >= 1")
        if self.non_sample_ratio < 0:
            raise ValueError("non_sample_ratio must be >= 0")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.y_scaling not in ("none", "max"):
            raise ValueError(f"unknown y_scaling {self.y_scaling!r}")
        if self.init not in ("trees", "random"):
            raise ValueError(f"unknown init {self.init!r}")

    def to_dict(self) -> dict:
        return {"initial_rank": self.initial_rank,
                "non_sample_ratio": self.non_sample_ratio,
                "max_sweeps": self.max_sweeps,
                "rel_tol": self.rel_tol,
                "rng_seed": self.rng_seed,
                "y_scaling": self.y_scaling,
                "init": self.init}


@dataclass(frozen=True)
class ConversionProblem:
    """Sample states, their target probabilities, and per-row provenance."""

    bits: np.ndarray      # (N, d) 0/1
    y: np.ndarray         # (N,) targets, already divided by y_scale
    tags: tuple[str, ...]
    y_scale: float = 1.0

    @property
    def num_samples(self) -> int:
        return self.bits.shape[0]

    @property
    def num_variables(self) -> int:
        return self.bits.shape[1]

    def input_columns(self) -> list[np.ndarray]:
        """The d indicator matrices S^(k), each 2 x N with columns (x_k, xbar_k)."""
        pairs = pairs_from_bits(self.bits)
        return [pairs[:, k, :].T.copy() for k in range(self.num_variables)]


@dataclass
class ConversionReport:
    objective_history: list[float]
    final_ranks: tuple[int, ...]
    sweeps: int
    seconds: float
    params_total: int
    params_nonzero: int
    converged: bool
    n_train_samples: int
    n_non_samples: int
    y_scale: float
    config: dict

    def to_dict(self) -> dict:
        return {"objective_history": self.objective_history,
                "final_ranks": list(self.final_ranks),
                "sweeps": self.sweeps,
                "seconds": self.seconds,
                "params_total": self.params_total,
                "params_nonzero": self.params_nonzero,
                "converged": self.converged,
                "n_train_samples": self.n_train_samples,
                "n_non_samples": self.n_non_samples,
                "y_scale": self.y_scale,
                "config": self.config}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


def generate_non_samples(data: Dataset, count: int, seed,
                         max_tries_factor: int = 1000) -> np.ndarray:
    """Uniform random states excluding every dataset row; distinct, seeded.

    Raises when the state space is already covered by the dataset or the
    rejection budget runs out (d too small relative to coverage).
    """
    d = data.num_variables
    if count == 0:
        return np.zeros((0, d), dtype=np.uint8)
    train_keys = {np.ascontiguousarray(row).tobytes() for row in data.rows}
    if d <= 60:
        available = (1 << d) - len(train_keys)
        if available < count:
            raise ConversionError(
                f"cannot draw {count} non-samples: only {available} states "
                f"outside the dataset for d={d}")
    rng = np.random.default_rng(seed)
    chosen: list[np.ndarray] = []
    seen: set[bytes] = set()
    budget = max(max_tries_factor * count, 10_000)
    drawn = 0
    while len(chosen) < count:
        batch = min(4096, budget - drawn)
        if batch <= 0:
            raise ConversionError("non-sample rejection budget exceeded")
        rows = rng.integers(0, 2, size=(batch, d), dtype=np.uint8)
        drawn += batch
        for row in rows:
            key = row.tobytes()
            if key in train_keys or key in seen:
                continue
            seen.add(key)
            chosen.append(row)
            if len(chosen) == count:
                break
    return np.asarray(chosen, dtype=np.uint8)


def build_problem(spn: SpnGraph, data: Dataset,
                  cfg: ConversionConfig) -> ConversionProblem:
    """Assemble sample/non-sample states and their exact SPN probabilities."""
    if spn.num_variables != data.num_variables:
        raise ConversionError(
            f"SPN has {spn.num_variables} variables, dataset has {data.num_variables}")
    n_train = data.num_instances
    n_neg = math.ceil(cfg.non_sample_ratio * n_train)
    neg = generate_non_samples(data, n_neg,
                               seed=np.random.SeedSequence([cfg.rng_seed, 1]))
    bits = np.vstack([data.rows, neg]) if n_neg else data.rows.copy()
    tags = (TRAIN_SAMPLE,) * n_train + (NON_SAMPLE,) * n_neg
    y = spn.evaluate_states(bits)
    y_scale = 1.0
    if cfg.y_scaling == "max":
        peak = float(y.max())
        if peak > 0:
            y = y / peak
            y_scale = peak
    return ConversionProblem(bits=bits, y=y, tags=tags, y_scale=y_scale)


def _slice_product_step(acc: np.ndarray, core: np.ndarray,
                        bits_k: np.ndarray, from_left: bool) -> np.ndarray:
    selected = core[:, 1 - bits_k, :]  # (R, N, S); state 1 selects the x slot

    if from_left:
        return np.einsum("nr,rns->ns", acc, selected, optimize=True)
    return np.einsum("rns,ns->nr", selected, acc, optimize=True)


def _right_interfaces(cores, bits) -> list[np.ndarray]:
    """a_{>k} for every position k; entry k has shape (N, R_{k+1})."""
    n, d = bits.shape
    out: list[np.ndarray] = [None] * d
    acc = np.ones((n, 1))
    out[d - 1] = acc
    for k in range(d - 1, 0, -1):
        acc = _slice_product_step(acc, cores[k], bits[:, k], from_left=False)
        out[k - 1] = acc
    return out


def _left_interfaces(cores, bits) -> list[np.ndarray]:
    """a_{<k} for every position k; entry k has shape (N, R_k)."""
    n, d = bits.shape
    out: list[np.ndarray] = [None] * d
    acc = np.ones((n, 1))
    out[0] = acc
    for k in range(d - 1):
        acc = _slice_product_step(acc, cores[k], bits[:, k], from_left=True)
        out[k + 1] = acc
    return out


def assemble_rows(left: np.ndarray, pairs_k: np.ndarray,
                  right: np.ndarray) -> np.ndarray:
    """All N design rows a_{>k}^T (x) s_k^T (x) a_{<k}, matching the
    first-index-fastest vectorization of core k."""
    n = left.shape[0]
    rows = right[:, :, None, None] * pairs_k[:, None, :, None] * left[:, None, None, :]
    return rows.reshape(n, -1)


def assemble_row(l: int, k: int, state: "AlsState") -> np.ndarray:
    """Design row of sample l for the current core position k."""
    if state.position != k:
        raise ConversionError(f"caches are at position {state.position}, not {k}")
    return assemble_rows(state.left[l:l + 1], state.sel[l:l + 1, k, :],
                         state.right[l:l + 1])[0]


@dataclass
class AlsState:
    """Mutable per-run state: the train, caches at the active core, history."""

    tt: TensorTrain
    bits: np.ndarray
    sel: np.ndarray
    y: np.ndarray
    position: int
    left: np.ndarray
    right: np.ndarray
    objective_history: list[float] = field(default_factory=list)
    warm: dict[int, np.ndarray] = field(default_factory=dict)
    removed_slices: int = 0


def _make_state(tt: TensorTrain, problem: ConversionProblem) -> AlsState:
    sel = pairs_from_bits(problem.bits)
    n = problem.num_samples
    state = AlsState(tt=tt, bits=problem.bits, sel=sel, y=problem.y,
                     position=0, left=np.ones((n, 1)), right=np.ones((n, 1)))
    values = tt.scale * _chain_values(tt, problem.bits)
    state.objective_history.append(float(((values - problem.y) ** 2).sum()))
    return state


def _chain_values(tt: TensorTrain, bits: np.ndarray) -> np.ndarray:
    acc = np.ones((bits.shape[0], 1))
    for k, core in enumerate(tt.cores):
        acc = _slice_product_step(acc, core, bits[:, k], from_left=True)
    return acc[:, 0]


def update_core(state: AlsState, k: int, direction: str) -> AlsState:
    """Refit core k by NNLS, then normalize it toward the sweep direction.

    Appends the new squared objective; all-zero slices found by the
    normalization step are removed from core k and its neighbor.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be forward or backward, got {direction!r}")
    cores = list(state.tt.cores)
    r_left, _, r_right = cores[k].shape
    a = assemble_rows(state.left, state.sel[:, k, :], state.right)
    warm = state.warm.get(k)
    if warm is not None and warm.shape[0] != a.shape[1]:
        warm = None
    result = nnls(a, state.y, warm_passive=warm)
    if not result.converged:
        raise ConversionError(f"NNLS failed to converge updating core {k}")
    state.warm[k] = result.passive
    cores[k] = result.x.reshape((r_left, 2, r_right), order="F")
    tt = TensorTrain(tuple(cores), state.tt.scale)
    try:
        if direction == "forward" and k < tt.d - 1:
            tt, removed = left_normalize_step(tt, k)
        elif direction == "backward" and k > 0:
            tt, removed = right_normalize_step(tt, k)
        else:
            removed = 0
    except TensorTrainError as exc:
        raise ModelCollapseError(str(exc)) from exc
    state.tt = tt
    state.removed_slices += removed
    state.objective_history.append(result.residual_norm ** 2)
    # Advance the incrementally maintained cache side.
    if direction == "forward":
        state.left = _slice_product_step(state.left, tt.cores[k],
                                         state.bits[:, k], from_left=True)
        state.position = k + 1
    else:
        state.right = _slice_product_step(state.right, tt.cores[k],
                                          state.bits[:, k], from_left=False)
        state.position = k - 1
    return state


def _initial_tt(d: int, rank: int, seed) -> TensorTrain:
    """i.i.d. uniform cores, rescaled so the chain has unit partition value.

    Without the rescaling the raw product of uniform cores sits many orders
    of magnitude above probability-sized targets and the first sweep's NNLS
    zeroes out most rank channels before they can be used.
    """
    rng = np.random.default_rng(seed)
    ranks = [1] + [rank] * (d - 1) + [1]
    cores = [rng.random((ranks[k], 2, ranks[k + 1])) for k in range(d)]
    acc = np.ones((1, 1))
    for core in cores:
        acc = acc @ core.sum(axis=1)
    factor = float(acc[0, 0]) ** (-1.0 / d)
    return TensorTrain(tuple(core * factor for core in cores))


def _trees_tt(spn: SpnGraph, rank: int) -> TensorTrain:
    """Direct TT sum of the SPN's highest-coefficient induced trees.

    Truncating the exact construction to the rank budget starts the sweeps
    at the dominant part of the network polynomial instead of a random
    point, which single-core updates alone rarely escape.
    """
    from .tensor_train import tt_from_rank1_sum

    terms = spn.top_induced_trees(rank)
    return tt_from_rank1_sum(terms)


def convert(spn: SpnGraph, data: Dataset,
            cfg: ConversionConfig | None = None) -> tuple[TensorTrain, ConversionReport]:
    """Full pipeline: build the problem, sweep until converged, canonicalize.

    The SPN must be valid and normalized. Returns the canonical train (mixed
    core first) and a report with the objective history and parameter counts.
    """
    cfg = cfg or ConversionConfig()
    t0 = time.perf_counter()
    if spn.num_variables < 2:
        raise ConversionError("conversion needs at least two variables")
    report_validity = spn.validate()
    if not report_validity.ok:
        raise ConversionError(f"SPN is not valid: {report_validity}")
    if abs(spn.partition_function() - 1.0) > 1e-8:
        raise ConversionError("SPN must be normalized (partition function 1)")
    problem = build_problem(spn, data, cfg)
    d = spn.num_variables
    if cfg.init == "trees":
        tt0 = _trees_tt(spn, cfg.initial_rank)
    else:
        tt0 = _initial_tt(d, cfg.initial_rank, np.random.SeedSequence([cfg.rng_seed, 0]))
    if problem.y_scale != 1.0:
        cores0 = list(tt0.cores)
        cores0[0] = cores0[0] / problem.y_scale
        tt0 = TensorTrain(tuple(cores0))
    state = _make_state(tt0, problem)

    sweeps = 0
    converged = False
    prev_obj = state.objective_history[0]
    for _ in range(cfg.max_sweeps):
        right_all = _right_interfaces(state.tt.cores, state.bits)
        state.left = np.ones((problem.num_samples, 1))
        state.position = 0
        for k in range(d - 1):
            state.right = right_all[k]
            update_core(state, k, "forward")
        left_all = _left_interfaces(state.tt.cores, state.bits)
        state.right = np.ones((problem.num_samples, 1))
        state.position = d - 1
        for k in range(d - 1, 0, -1):
            state.left = left_all[k]
            update_core(state, k, "backward")
        sweeps += 1
        obj = state.objective_history[-1]
        rel_decrease = (prev_obj - obj) / max(prev_obj, 1e-300)
        prev_obj = obj
        if rel_decrease < cfg.rel_tol:
            converged = True
            break

    tt = TensorTrain(state.tt.cores, state.tt.scale * problem.y_scale)
    tt = canonicalize(tt, mixed_index=0)
    total, nonzero = parameter_count(tt)
    report = ConversionReport(
        objective_history=state.objective_history,
        final_ranks=tt.ranks,
        sweeps=sweeps,
        seconds=time.perf_counter() - t0,
        params_total=total,
        params_nonzero=nonzero,
        converged=converged,
        n_train_samples=sum(t == TRAIN_SAMPLE for t in problem.tags),
        n_non_samples=sum(t == NON_SAMPLE for t in problem.tags),
        y_scale=problem.y_scale,
        config=cfg.to_dict())
    return tt, report
