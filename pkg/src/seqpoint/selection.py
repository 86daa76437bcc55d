"""Representative-SL selection: adaptive binning plus baseline selectors.

The main selector picks one representative SL per bin of the observed SL
range and weights it by the number of iterations the bin covers, growing the
bucket count until the weighted-sum self-projection of total runtime lands
within a user error threshold. Weights count iterations, not unique SLs:
only iteration weights make the weighted sum reproduce the epoch total.

Four single-point baselines (most-frequent SL, median SL, worst-case SL, and
a contiguous-window sampler) and a seeded k-means alternative are provided
for comparison. Every selector returns a :class:`SeqPointSet` whose weights
sum exactly to the epoch's iteration count, with points sorted by SL.

All selectors are pure functions of their inputs; identical inputs (and
seed, for k-means) produce identical results.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ParameterError, TraceValidationError
from .projection import percent_error, project_additive
from .trace import (
    RUNTIME_STAT,
    EpochTrace,
    SLHistogram,
    SLStats,
    sl_histogram,
    sl_stats,
)

METHODS = ("seqpoint", "frequent", "median", "worst", "prior", "kmeans")
KMEANS_FEATURES = ("runtime", "metrics", "runtime+metrics")


@dataclass(frozen=True)
class SelectionParams:
    """Knobs of the adaptive selector.

    ``n_threshold``: unique-SL count at or below which every unique SL becomes
    a representative outright. ``k_init``: starting bucket count for binning.
    ``error_threshold_pct``: target self-projection error (percent).
    ``k_max``: safety cap for the bucket count; defaults to the number of
    unique SLs in the trace being selected on.
    """

    n_threshold: int = 10
    k_init: int = 5
    error_threshold_pct: float = 1.0
    k_max: int | None = None

    def __post_init__(self):
        if self.n_threshold < 1:
            raise ParameterError(f"n_threshold must be >= 1, got {self.n_threshold}")
        if self.k_init < 1:
            raise ParameterError(f"k_init must be >= 1, got {self.k_init}")
        if not self.error_threshold_pct > 0:
            raise ParameterError(
                f"error_threshold_pct must be > 0, got {self.error_threshold_pct}"
            )
        if self.k_max is not None and self.k_max < self.k_init:
            raise ParameterError(
                f"k_max ({self.k_max}) must be >= k_init ({self.k_init})"
            )

    def as_dict(self) -> dict:
        return {
            "n_threshold": self.n_threshold,
            "k_init": self.k_init,
            "error_threshold_pct": self.error_threshold_pct,
            "k_max": self.k_max,
        }


@dataclass(frozen=True)
class SLBin:
    """One contiguous SL range. ``hi`` is exclusive except on the last bin."""

    lo: int
    hi: int
    hi_inclusive: bool
    member_sls: tuple[int, ...]
    iteration_count: int
    avg_runtime: float


@dataclass(frozen=True)
class SeqPoint:
    """A representative SL, the iterations it stands for, and its stat values."""

    seq_len: int
    weight: int
    stat_values: Mapping[str, float]

    def __post_init__(self):
        if self.seq_len < 1:
            raise TraceValidationError(f"seq_len must be >= 1, got {self.seq_len}")
        if self.weight < 1:
            raise TraceValidationError(f"weight must be >= 1, got {self.weight}")
        if RUNTIME_STAT not in self.stat_values:
            raise TraceValidationError(f"stat_values must contain {RUNTIME_STAT!r}")


@dataclass(frozen=True)
class SeqPointSet:
    """The output of a selector: weighted representatives plus provenance.

    ``achieved_error_pct`` is the self-projection error of total runtime on
    the trace the selection ran on. ``threshold_met`` is False only when the
    adaptive selector hit ``k_max`` without reaching its error threshold.
    ``k_final`` records the bucket count used (the unique-SL count on the
    all-unique path, 1 for single-point baselines).
    """

    method: str
    points: tuple[SeqPoint, ...]
    k_final: int
    achieved_error_pct: float
    threshold_met: bool = True
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}, expected one of {METHODS}")
        sls = [p.seq_len for p in self.points]
        if sls != sorted(sls):
            raise TraceValidationError("points must be sorted by seq_len ascending")

    @property
    def total_weight(self) -> int:
        return sum(p.weight for p in self.points)


# --- binning -----------------------------------------------------------------


def bin_sequence_lengths(hist: SLHistogram, stats: SLStats, k: int) -> list[SLBin]:
    """Split the observed SL range into k equal-width buckets, dropping empty ones.

    Bucket width is ``(max_sl - min_sl + 1) // k`` (at least 1); the last
    bucket absorbs the division remainder. Every observed SL lands in exactly
    one bucket. A bucket's ``avg_runtime`` is the iteration-weighted mean of
    its members' per-SL mean runtimes.
    """
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    span = hist.max_sl - hist.min_sl + 1
    width = max(1, span // k)
    members: dict[int, list[int]] = {}
    for sl in hist.entries:
        idx = min((sl - hist.min_sl) // width, k - 1)
        members.setdefault(idx, []).append(sl)
    bins = []
    for idx in sorted(members):
        sls = tuple(sorted(members[idx]))
        count = sum(hist.entries[sl] for sl in sls)
        avg = sum(stats.mean_runtime[sl] * hist.entries[sl] for sl in sls) / count
        last = idx == k - 1
        bins.append(
            SLBin(
                lo=hist.min_sl + idx * width,
                hi=hist.max_sl if last else hist.min_sl + (idx + 1) * width,
                hi_inclusive=last,
                member_sls=sls,
                iteration_count=count,
                avg_runtime=avg,
            )
        )
    return bins


def representative_of_bin(sl_bin: SLBin, stats: SLStats) -> SeqPoint:
    """The member SL whose mean runtime is closest to the bin average (ties
    break toward the smaller SL), weighted by the bin's iteration count."""
    best = min(
        sl_bin.member_sls,
        key=lambda sl: (abs(stats.mean_runtime[sl] - sl_bin.avg_runtime), sl),
    )
    return SeqPoint(
        seq_len=best, weight=sl_bin.iteration_count, stat_values=stats.values_at(best)
    )


# --- selectors ---------------------------------------------------------------


def select_seqpoints(trace: EpochTrace, params: SelectionParams | None = None) -> SeqPointSet:
    """Select representative SLs with adaptive bucket growth.

    When the trace exercises no more unique SLs than ``params.n_threshold``,
    every unique SL becomes a representative weighted by its occurrence count
    (exact by construction). Otherwise the SL range is binned into ``k_init``
    buckets, one representative is drawn per bucket, and k is incremented
    until the weighted-sum projection of total runtime is within
    ``error_threshold_pct`` of the trace's actual total or k reaches
    ``k_max`` (in which case the result is flagged via ``threshold_met``).
    """
    params = params or SelectionParams()
    hist = sl_histogram(trace)
    stats = sl_stats(trace)
    actual_total = trace.total_runtime
    unique = len(hist.entries)

    if unique <= params.n_threshold:
        points = tuple(
            SeqPoint(seq_len=sl, weight=stats.count[sl], stat_values=stats.values_at(sl))
            for sl in sorted(hist.entries)
        )
        achieved = _self_projection_error(points, actual_total)
        return SeqPointSet(
            method="seqpoint",
            points=points,
            k_final=unique,
            achieved_error_pct=achieved,
            threshold_met=True,
            params=params.as_dict(),
        )

    k_max = params.k_max if params.k_max is not None else max(unique, params.k_init)
    threshold_met = False
    points: tuple[SeqPoint, ...] = ()
    achieved = float("inf")
    k = params.k_init
    for k in range(params.k_init, k_max + 1):
        bins = bin_sequence_lengths(hist, stats, k)
        points = tuple(representative_of_bin(b, stats) for b in bins)
        achieved = _self_projection_error(points, actual_total)
        if achieved <= params.error_threshold_pct:
            threshold_met = True
            break
    return SeqPointSet(
        method="seqpoint",
        points=points,
        k_final=k,
        achieved_error_pct=achieved,
        threshold_met=threshold_met,
        params=params.as_dict(),
    )


def _self_projection_error(points, actual_total: float) -> float:
    predicted = sum(p.weight * p.stat_values[RUNTIME_STAT] for p in points)
    return percent_error(predicted, actual_total)


def _single_point_set(method: str, trace: EpochTrace, stats: SLStats, sl: int, params: dict) -> SeqPointSet:
    point = SeqPoint(seq_len=sl, weight=len(trace.records), stat_values=stats.values_at(sl))
    achieved = _self_projection_error((point,), trace.total_runtime)
    return SeqPointSet(
        method=method,
        points=(point,),
        k_final=1,
        achieved_error_pct=achieved,
        params=params,
    )


def baseline_frequent(trace: EpochTrace) -> SeqPointSet:
    """Single representative at the most frequently occurring SL (ties: smaller)."""
    hist = sl_histogram(trace)
    stats = sl_stats(trace)
    sl = min(hist.entries, key=lambda s: (-hist.entries[s], s))
    return _single_point_set("frequent", trace, stats, sl, {})


def baseline_median(trace: EpochTrace) -> SeqPointSet:
    """Single representative at the median of the per-iteration SL multiset
    (even count takes the lower middle)."""
    stats = sl_stats(trace)
    sls = sorted(r.seq_len for r in trace.records)
    sl = sls[(len(sls) - 1) // 2]
    return _single_point_set("median", trace, stats, sl, {})


def baseline_worst(trace: EpochTrace, stat: str = RUNTIME_STAT) -> SeqPointSet:
    """Single representative at the unique SL whose whole-epoch projection of
    ``stat`` has the largest percent error (ties: smaller SL). An oracle-style
    bound over single-SL choices; requires the full trace."""
    stats = sl_stats(trace)
    if stat == RUNTIME_STAT:
        per_sl = stats.mean_runtime
        actual = trace.total_runtime
    else:
        if stat not in stats.mean_metrics:
            raise ParameterError(f"trace carries no metric {stat!r}")
        per_sl = stats.mean_metrics[stat]
        actual = sum(r.metrics[stat] for r in trace.records)
    n = len(trace.records)
    sl = min(per_sl, key=lambda s: (-percent_error(per_sl[s] * n, actual), s))
    return _single_point_set("worst", trace, stats, sl, {"stat": stat})


def baseline_prior(trace: EpochTrace, warmup: int = 0, sample_count: int = 50) -> SeqPointSet:
    """Contiguous-window sampler: mean stats over ``sample_count`` iterations
    after ``warmup``, scaled by the epoch's iteration count.

    The point's ``seq_len`` is the rounded mean SL of the window, recorded
    for reference only; the selection's identity is the window itself.
    """
    if warmup < 0:
        raise ParameterError(f"warmup must be >= 0, got {warmup}")
    if sample_count < 1:
        raise ParameterError(f"sample_count must be >= 1, got {sample_count}")
    if warmup + sample_count > len(trace.records):
        raise ParameterError(
            f"warmup ({warmup}) + sample_count ({sample_count}) exceeds "
            f"iteration count ({len(trace.records)})"
        )
    window = trace.records[warmup : warmup + sample_count]
    seq_len = max(1, round(sum(r.seq_len for r in window) / len(window)))
    point = SeqPoint(
        seq_len=seq_len, weight=len(trace.records), stat_values=_window_means(window, trace)
    )
    achieved = _self_projection_error((point,), trace.total_runtime)
    return SeqPointSet(
        method="prior",
        points=(point,),
        k_final=1,
        achieved_error_pct=achieved,
        params={"warmup": warmup, "sample_count": sample_count},
    )


def _window_means(window, trace: EpochTrace) -> dict[str, float]:
    values = {RUNTIME_STAT: sum(r.runtime for r in window) / len(window)}
    for name in trace.metric_names:
        values[name] = sum(r.metrics[name] for r in window) / len(window)
    return values


# --- k-means alternative -------------------------------------------------------


def kmeans_select(
    trace: EpochTrace,
    k: int,
    features: str = "runtime",
    seed: int = 0,
    max_iters: int = 100,
) -> SeqPointSet:
    """Cluster per-SL execution profiles with seeded k-means and keep one
    representative SL per cluster.

    Feature vectors (per-SL mean runtime and/or per-SL mean metric values,
    z-scored per dimension) are weighted by iteration counts, so clustering
    unique SLs is equivalent to clustering every iteration. Initialization is
    deterministic seeded k-means++; a cluster's representative is the member
    SL nearest its centroid (ties: smaller SL) and carries the cluster's
    total iteration count as weight.
    """
    if max_iters < 1:
        raise ParameterError(f"max_iters must be >= 1, got {max_iters}")
    stats = sl_stats(trace)
    sls = sorted(stats.count)
    if not 1 <= k <= len(sls):
        raise ParameterError(f"k must be in 1..{len(sls)} (unique SLs), got {k}")
    vectors = _feature_matrix(stats, sls, features)
    weights = np.array([stats.count[sl] for sl in sls], dtype=float)

    centroids = _kmeans_pp_init(vectors, weights, k, np.random.default_rng(seed))
    assignment = np.zeros(len(sls), dtype=int)
    for _ in range(max_iters):
        dists = ((vectors[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assignment = dists.argmin(axis=1)
        for c in range(k):
            mask = new_assignment == c
            if mask.any():
                centroids[c] = np.average(vectors[mask], axis=0, weights=weights[mask])
        if (new_assignment == assignment).all():
            assignment = new_assignment
            break
        assignment = new_assignment

    points = []
    for c in range(k):
        member_idx = [i for i in range(len(sls)) if assignment[i] == c]
        if not member_idx:
            continue
        rep_i = min(
            member_idx,
            key=lambda i: (float(((vectors[i] - centroids[c]) ** 2).sum()), sls[i]),
        )
        points.append(
            SeqPoint(
                seq_len=sls[rep_i],
                weight=int(sum(stats.count[sls[i]] for i in member_idx)),
                stat_values=stats.values_at(sls[rep_i]),
            )
        )
    points.sort(key=lambda p: p.seq_len)
    achieved = _self_projection_error(points, trace.total_runtime)
    return SeqPointSet(
        method="kmeans",
        points=tuple(points),
        k_final=k,
        achieved_error_pct=achieved,
        params={"k": k, "features": features, "seed": seed, "max_iters": max_iters},
    )


def _feature_matrix(stats: SLStats, sls: list[int], features: str) -> np.ndarray:
    if features not in KMEANS_FEATURES:
        raise ParameterError(f"features must be one of {KMEANS_FEATURES}, got {features!r}")
    columns = []
    if features in ("runtime", "runtime+metrics"):
        columns.append([stats.mean_runtime[sl] for sl in sls])
    if features in ("metrics", "runtime+metrics"):
        names = sorted(stats.mean_metrics)
        if not names:
            raise ParameterError(f"features {features!r} requested but trace has no metrics")
        for name in names:
            columns.append([stats.mean_metrics[name][sl] for sl in sls])
    matrix = np.array(columns, dtype=float).T
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)
    std[std == 0] = 1.0
    return (matrix - mean) / std


def _kmeans_pp_init(vectors: np.ndarray, weights: np.ndarray, k: int, rng) -> np.ndarray:
    n = len(vectors)
    chosen = [int(rng.choice(n, p=weights / weights.sum()))]
    while len(chosen) < k:
        d2 = np.min(
            [((vectors - vectors[c]) ** 2).sum(axis=1) for c in chosen], axis=0
        )
        mass = weights * d2
        total = mass.sum()
        if total > 0:
            chosen.append(int(rng.choice(n, p=mass / total)))
        else:
            # All remaining points coincide with a центр; take the first unchosen.
            chosen.append(next(i for i in range(n) if i not in chosen))
    return vectors[chosen].copy()


# --- cross-configuration re-measurement ----------------------------------------


def remeasure(point_set: SeqPointSet, trace: EpochTrace) -> SeqPointSet:
    """Re-evaluate a selection's stat values on another configuration's trace.

    Representative SLs and weights are reused unchanged (the selection is
    identified once and only its points are measured elsewhere); only the
    stat values are looked up in the new trace. For the window sampler the
    same window positions are re-averaged. The new trace may be partial as
    long as it covers the representative SLs.
    """
    if point_set.method == "prior":
        warmup = int(point_set.params["warmup"])
        sample_count = int(point_set.params["sample_count"])
        if warmup + sample_count > len(trace.records):
            raise ParameterError(
                f"trace for config {trace.config_id!r} is too short to re-measure "
                f"window [{warmup}, {warmup + sample_count})"
            )
        window = trace.records[warmup : warmup + sample_count]
        points = tuple(
            SeqPoint(seq_len=p.seq_len, weight=p.weight, stat_values=_window_means(window, trace))
            for p in point_set.points
        )
    else:
        stats = sl_stats(trace)
        missing = [p.seq_len for p in point_set.points if p.seq_len not in stats.count]
        if missing:
            raise ParameterError(
                f"trace for config {trace.config_id!r} does not contain SLs {missing}"
            )
        points = tuple(
            SeqPoint(seq_len=p.seq_len, weight=p.weight, stat_values=stats.values_at(p.seq_len))
            for p in point_set.points
        )
    return SeqPointSet(
        method=point_set.method,
        points=points,
        k_final=point_set.k_final,
        achieved_error_pct=point_set.achieved_error_pct,
        threshold_met=point_set.threshold_met,
        params=dict(point_set.params),
    )


# --- serialization --------------------------------------------------------------


def serialize_seqpoint_set(point_set: SeqPointSet) -> str:
    doc = {
        "method": point_set.method,
        "params": dict(point_set.params),
        "k_final": point_set.k_final,
        "achieved_error_pct": point_set.achieved_error_pct,
        "threshold_met": point_set.threshold_met,
        "points": [
            {
                "seq_len": p.seq_len,
                "weight": p.weight,
                "stat_values": {k: p.stat_values[k] for k in sorted(p.stat_values)},
            }
            for p in point_set.points
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def parse_seqpoint_set(text: str) -> SeqPointSet:
    doc = json.loads(text)
    try:
        points = tuple(
            SeqPoint(
                seq_len=int(p["seq_len"]),
                weight=int(p["weight"]),
                stat_values={str(k): float(v) for k, v in p["stat_values"].items()},
            )
            for p in doc["points"]
        )
        return SeqPointSet(
            method=str(doc["method"]),
            points=points,
            k_final=int(doc["k_final"]),
            achieved_error_pct=float(doc["achieved_error_pct"]),
            threshold_met=bool(doc.get("threshold_met", True)),
            params=doc.get("params") or {},
        )
    except KeyError as exc:
        raise ParameterError(f"point-set file missing key {exc.args[0]!r}") from None
