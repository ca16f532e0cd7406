"""Fidelity and compression measurement between an SPN and its tensor train.

Total variation distance enumerates all 2^d states in fixed-size chunks (no
full tensor is ever materialized), with both models renormalized by their own
partition functions. Parameter accounting counts sum-edge weights plus two
entries per Bernoulli leaf on the SPN side and total/strictly-positive core
entries on the train side.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .spn import SpnGraph
from .states import enumerate_states
from .tensor_train import TensorTrain, tt_eval_states, tt_partition

TV_LIMIT = 20


class MetricsError(Exception):
    pass


def tv_distance(spn: SpnGraph, tt: TensorTrain, limit: int = TV_LIMIT,
                chunk: int = 1 << 14) -> float:
    """0.5 * sum_x |P_spn(x) - P_tt(x)| over all 2^d complete states."""
    d = spn.num_variables
    if tt.d != d:
        raise MetricsError(f"models disagree on d: {d} vs {tt.d}")
    if d > limit:
        raise MetricsError(f"TV enumeration limited to d <= {limit}, got {d}")
    z_spn = spn.partition_function()
    z_tt = tt_partition(tt)
    if z_spn <= 0 or z_tt <= 0:
        raise MetricsError("both models need a positive partition function")
    total = 0.0
    n_states = 1 << d
    for start in range(0, n_states, chunk):
        bits = enumerate_states(d, start, min(start + chunk, n_states))
        p = spn.evaluate_states(bits) / z_spn
        q = tt_eval_states(tt, bits) / z_tt
        total += float(np.abs(p - q).sum())
    return 0.5 * total


def spn_parameter_stats(spn: SpnGraph) -> tuple[int, int]:
    """(number of sum-edge weights, number of leaf nodes)."""
    return spn.num_sum_weights(), spn.num_leaves()


def parameter_count_from_stats(num_weights: int, num_leaves: int) -> int:
    return num_weights + 2 * num_leaves


def spn_parameter_count(spn: SpnGraph) -> int:
    """Weights plus two Bernoulli entries per leaf."""
    weights, leaves = spn_parameter_stats(spn)
    return parameter_count_from_stats(weights, leaves)


@dataclass(frozen=True)
class ProfileRow:
    set_tag: str
    index: int
    spn_prob: float
    tspn_prob: float


def probability_profile(spn: SpnGraph, tt: TensorTrain,
                        sets: list[tuple[str, np.ndarray]]) -> list[ProfileRow]:
    """Normalized SPN and train probabilities per state, tagged by input set.

    ``sets`` is an ordered list of (tag, (n, d) state array); output order is
    set order then input order, so repeated runs are byte-identical.
    """
    d = spn.num_variables
    if tt.d != d:
        raise MetricsError(f"models disagree on d: {d} vs {tt.d}")
    z_spn = spn.partition_function()
    z_tt = tt_partition(tt)
    rows: list[ProfileRow] = []
    for tag, bits in sets:
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.size == 0:
            continue
        if bits.ndim != 2 or bits.shape[1] != d:
            raise MetricsError(f"set {tag!r}: expected states of shape (n, {d})")
        p = spn.evaluate_states(bits) / z_spn
        q = tt_eval_states(tt, bits) / z_tt
        for i in range(bits.shape[0]):
            rows.append(ProfileRow(tag, i, float(p[i]), float(q[i])))
    return rows


@dataclass
class EvalReport:
    tv_distance: float | None
    tv_l1: float | None
    spn_params: int
    tspn_params_total: int
    tspn_params_nonzero: int
    reduction_factor: float
    profile_rows: list[ProfileRow]

    def to_dict(self) -> dict:
        return {"tv_distance": self.tv_distance,
                "tv_l1": self.tv_l1,
                "spn_params": self.spn_params,
                "tspn_params_total": self.tspn_params_total,
                "tspn_params_nonzero": self.tspn_params_nonzero,
                "reduction_factor": self.reduction_factor,
                "profile_rows": [[r.set_tag, r.index, r.spn_prob, r.tspn_prob]
                                 for r in self.profile_rows]}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


def report(spn: SpnGraph, tt: TensorTrain,
           sets: list[tuple[str, np.ndarray]],
           limit: int = TV_LIMIT) -> EvalReport:
    """Aggregate TV (omitted, not erred, beyond the enumeration limit),
    parameter accounting, and the probability profile."""
    from .tensor_train import parameter_count

    if tt.d <= limit:
        tv = tv_distance(spn, tt, limit=limit)
        tv_l1 = 2.0 * tv
    else:
        tv = None
        tv_l1 = None
    spn_params = spn_parameter_count(spn)
    total, nonzero = parameter_count(tt)
    reduction = spn_params / nonzero if nonzero else float("inf")
    rows = probability_profile(spn, tt, sets)
    return EvalReport(tv_distance=tv, tv_l1=tv_l1, spn_params=spn_params,
                      tspn_params_total=total, tspn_params_nonzero=nonzero,
                      reduction_factor=reduction, profile_rows=rows)


def write_profile_csv(rows: list[ProfileRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["set", "index", "spn_prob", "tspn_prob"])
        for row in rows:
            writer.writerow([row.set_tag, row.index,
                             repr(row.spn_prob), repr(row.tspn_prob)])


def write_profile_svg(rows: list[ProfileRow], path) -> None:
    """Two stacked scatter panels: per-state SPN and train probabilities."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    tags = []
    for row in rows:
        if row.set_tag not in tags:
            tags.append(row.set_tag)
    fig, (ax_spn, ax_tt) = plt.subplots(2, 1, figsize=(9, 6), sharex=True)
    offset = 0
    for tag in tags:
        subset = [r for r in rows if r.set_tag == tag]
        xs = np.arange(offset, offset + len(subset))
        ax_spn.scatter(xs, [r.spn_prob for r in subset], s=6, label=tag)
        ax_tt.scatter(xs, [r.tspn_prob for r in subset], s=6, label=tag)
        offset += len(subset)
    positives = [r.spn_prob for r in rows if r.spn_prob > 0]
    positives += [r.tspn_prob for r in rows if r.tspn_prob > 0]
    if positives:
        floor = min(positives) / 10.0
        for ax in (ax_spn, ax_tt):
            ax.set_yscale("symlog", linthresh=floor)
    ax_spn.set_ylabel("SPN probability")
    ax_tt.set_ylabel("tensor-train probability")
    ax_tt.set_xlabel("input index")
    ax_spn.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
