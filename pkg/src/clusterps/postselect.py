"""Accept/abort decisions from confidence metrics.

Global strategy: decode the whole shot and accept iff the metric is at most
the cutoff.

Real-time strategy: decode with a sliding window. After every window
``w >= L - 1`` (and after the final window) collect the committed mechanisms
that lie inside a cluster of one of the last L windows, split them into
connected components of the fault graph, and evaluate the cluster metric with
the union of those windows' commit sets as the normalizing set. Abort as soon
as the metric exceeds the cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import metrics
from .decoder import BpConfig, DecodeOutcome
from .dem import DetectorErrorModel, FaultGraph, build_fault_graph
from .metrics import MetricSpec
from .window import InnerDecoder, WindowConfig, WindowPlan, WindowRecord, run_windows


@dataclass(frozen=True)
class GlobalPolicy:
    metric: MetricSpec
    cutoff: float

    def __post_init__(self):
        # no upper bound: cluster fractions with alpha < 1 can exceed 1
        if math.isnan(self.cutoff) or self.cutoff < 0:
            raise ValueError("cutoff must be a nonnegative number")


@dataclass(frozen=True)
class RealtimePolicy:
    metric: MetricSpec
    cutoff: float
    lookback: int

    def __post_init__(self):
        if not self.metric.is_cluster:
            raise ValueError("real-time post-selection needs a cluster metric")
        if self.lookback < 1:
            raise ValueError("lookback L must be >= 1")
        if math.isnan(self.cutoff) or self.cutoff < 0:
            raise ValueError("cutoff must be a nonnegative number")


@dataclass(frozen=True)
class ShotVerdict:
    accepted: bool
    abort_window: Optional[int]
    rounds_elapsed: int
    metric_value: float
    predicted_flips: Optional[np.ndarray] = None


def global_decide(policy: GlobalPolicy, outcome: DecodeOutcome, model: DetectorErrorModel) -> ShotVerdict:
    value = metrics.evaluate(policy.metric, outcome, model)
    accepted = value <= policy.cutoff
    return ShotVerdict(
        accepted=accepted,
        abort_window=None,
        rounds_elapsed=model.num_rounds,
        metric_value=value,
        predicted_flips=outcome.predicted_flips,
    )


def is_checkpoint(w: int, lookback: int, final: bool) -> bool:
    return final or w >= lookback - 1


def committed_clusters(
    window_records: Sequence[WindowRecord], fault_graph: FaultGraph, w: int, lookback: int
) -> tuple[list[np.ndarray], np.ndarray]:
    """Committed clusters and the normalizing set at window ``w``.

    Uses windows ``max(0, w - L + 1) .. w``; ``w < L - 1`` is only allowed
    for the final window of a short run.
    """
    if w >= len(window_records):
        raise ValueError(f"window {w} has not been decoded")
    if w < lookback - 1 and not window_records[w].final:
        raise ValueError(f"checkpoint needs w >= L - 1 = {lookback - 1}")
    inside, denom = [], []
    for rec in window_records[max(0, w - lookback + 1) : w + 1]:
        commit = rec.commit
        denom.append(commit)
        for members in rec.global_clusters():
            inside.append(np.intersect1d(members, commit))
    inside_set = np.unique(np.concatenate(inside)) if inside else np.zeros(0, dtype=np.int64)
    denominator = np.unique(np.concatenate(denom)) if denom else np.zeros(0, dtype=np.int64)
    return fault_graph.components(inside_set), denominator


def realtime_value(
    spec: MetricSpec, model: DetectorErrorModel, components: list[np.ndarray], denominator: np.ndarray
) -> float:
    """Metric of committed clusters, normalized by the restricted commit union."""
    if not components:
        return 0.0
    base = spec.restriction if spec.restriction is not None else np.arange(model.num_mechanisms)
    restriction = np.intersect1d(denominator, base)
    if spec.family == metrics.CLUSTER_SIZE:
        return metrics.cluster_size_norm_fraction(components, restriction, spec.alpha)
    return metrics.cluster_llr_norm_fraction(components, restriction, spec.alpha, model.llrs)


def realtime_decide(
    policy: RealtimePolicy,
    model: DetectorErrorModel,
    syndrome,
    window_config: WindowConfig,
    inner: Optional[InnerDecoder] = None,
    bp: Optional[BpConfig] = None,
    plan: Optional[WindowPlan] = None,
    fault_graph: Optional[FaultGraph] = None,
    conv_max_conf: bool = False,
) -> ShotVerdict:
    plan = plan or WindowPlan.build(model, window_config)
    graph = fault_graph or build_fault_graph(model)
    last = {"value": 0.0, "window": None}

    def observer(state, record):
        if not is_checkpoint(record.index, policy.lookback, record.final):
            return False
        comps, denom = committed_clusters(state.records, graph, record.index, policy.lookback)
        value = realtime_value(policy.metric, model, comps, denom)
        last["value"] = value
        if value > policy.cutoff:
            last["window"] = record.index
            return True
        return False

    _, flips, _ = run_windows(model, syndrome, window_config, inner, observer, bp, plan, conv_max_conf)
    if last["window"] is not None:
        return ShotVerdict(False, last["window"], plan.rounds_at(last["window"]), last["value"], flips)
    return ShotVerdict(True, None, model.num_rounds, last["value"], flips)
