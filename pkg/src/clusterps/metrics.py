"""Confidence metrics computed from decoder soft outputs.

The cluster metrics are normalized alpha-norms of per-cluster statistics:

    Q_size  = (sum_i |C_i|^a)^(1/a) / |E|
    Q_llr   = (sum_i W(C_i)^a)^(1/a) / W(E),   W(S) = sum_{e in S} w_e

with ``a = inf`` meaning the maximum. Each cluster is first intersected with
the restriction set E and empty intersections are dropped; an empty cluster
list always evaluates to 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

CLUSTER_SIZE = "cluster_size"
CLUSTER_LLR = "cluster_llr"
CORRECTION_WEIGHT = "correction_weight"
DETECTOR_DENSITY = "detector_density"

_SHORT = {CLUSTER_SIZE: "size", CLUSTER_LLR: "llr", CORRECTION_WEIGHT: "weight", DETECTOR_DENSITY: "density"}
_LONG = {v: k for k, v in _SHORT.items()}


def parse_alpha(text: str) -> float:
    """Decimal or the literal ``inf``."""
    value = math.inf if text.strip().lower() == "inf" else float(text)
    if not value > 0:
        raise ValueError(f"alpha must be positive, got {text!r}")
    return value


def format_alpha(alpha: Optional[float]) -> str:
    if alpha is None:
        return ""
    if math.isinf(alpha):
        return "inf"
    return repr(int(alpha)) if float(alpha).is_integer() else repr(float(alpha))


@dataclass(frozen=True)
class MetricSpec:
    family: str
    alpha: Optional[float] = None
    restriction: Optional[np.ndarray] = field(default=None, compare=False, hash=False, repr=False)

    def __post_init__(self):
        if self.family not in _SHORT:
            raise ValueError(f"unknown metric family {self.family!r}")
        if self.is_cluster:
            if self.alpha is None or not self.alpha > 0:
                raise ValueError("cluster metrics need alpha > 0")
        elif self.alpha is not None:
            raise ValueError(f"{self.family} takes no alpha")
        if self.restriction is not None:
            object.__setattr__(self, "restriction", np.unique(np.asarray(self.restriction, dtype=np.int64)))

    @classmethod
    def parse(cls, text: str) -> "MetricSpec":
        """Parse ``size:2``, ``llr:inf``, ``weight`` or ``density``."""
        name, sep, alpha = text.strip().partition(":")
        if name not in _LONG:
            raise ValueError(f"unknown metric {text!r}")
        family = _LONG[name]
        if family in (CLUSTER_SIZE, CLUSTER_LLR):
            if not sep:
                raise ValueError(f"metric {text!r} needs an alpha, e.g. {name}:2")
            return cls(family, parse_alpha(alpha))
        if sep:
            raise ValueError(f"metric {name!r} takes no alpha")
        return cls(family)

    @property
    def is_cluster(self) -> bool:
        return self.family in (CLUSTER_SIZE, CLUSTER_LLR)

    @property
    def label(self) -> str:
        if self.is_cluster:
            return f"{_SHORT[self.family]}:{format_alpha(self.alpha)}"
        return _SHORT[self.family]

    @property
    def short_name(self) -> str:
        return _SHORT[self.family]

    def restricted_to(self, mechanisms) -> "MetricSpec":
        return replace(self, restriction=mechanisms)


def parse_metric_list(text: str) -> list[MetricSpec]:
    return [MetricSpec.parse(tok) for tok in text.split(",") if tok.strip()]


def _members(cluster) -> np.ndarray:
    return np.asarray(getattr(cluster, "mechanisms", cluster), dtype=np.int64)


def _restricted_parts(clusters: Iterable, restriction: np.ndarray) -> list[np.ndarray]:
    parts = []
    for c in clusters:
        part = np.intersect1d(_members(c), restriction, assume_unique=False)
        if part.size:
            parts.append(part)
    return parts


def _norm(values: np.ndarray, alpha: float) -> float:
    if math.isinf(alpha):
        return float(values.max())
    return float(np.sum(values ** alpha) ** (1.0 / alpha))


def _check_alpha(alpha: float) -> None:
    if not alpha > 0:
        raise ValueError("alpha must be positive")


def cluster_size_norm_fraction(clusters: Sequence, restriction, alpha: float) -> float:
    """Cluster size alpha-norm fraction; ``clusters`` holds Cluster objects or index arrays."""
    _check_alpha(alpha)
    restriction = np.unique(np.asarray(restriction, dtype=np.int64))
    if restriction.size == 0:
        raise ValueError("restriction set is empty")
    parts = _restricted_parts(clusters, restriction)
    if not parts:
        return 0.0
    sizes = np.array([p.size for p in parts], dtype=np.float64)
    return _norm(sizes / restriction.size, alpha)


def cluster_llr_norm_fraction(clusters: Sequence, restriction, alpha: float, llrs) -> float:
    """Cluster LLR alpha-norm fraction."""
    _check_alpha(alpha)
    restriction = np.unique(np.asarray(restriction, dtype=np.int64))
    if restriction.size == 0:
        raise ValueError("restriction set is empty")
    parts = _restricted_parts(clusters, restriction)
    if not parts:
        return 0.0
    llrs = np.asarray(llrs, dtype=np.float64)
    total = float(llrs[restriction].sum())
    if total == 0.0:
        raise ValueError("restriction has zero total LLR; the metric is undefined")
    masses = np.array([llrs[p].sum() for p in parts])
    return _norm(masses / total, alpha)


def correction_weight(correction, llrs) -> float:
    """Log-likelihood weight: sum of ``llrs`` over the support of ``correction``."""
    mask = np.asarray(correction).astype(bool)
    return float(np.asarray(llrs, dtype=np.float64)[mask].sum())


def detector_density(syndrome) -> float:
    s = np.asarray(syndrome)
    if s.size == 0:
        raise ValueError("detector density needs at least one detector")
    return float(np.count_nonzero(s)) / s.size


def _restriction_of(spec: MetricSpec, model) -> np.ndarray:
    if spec.restriction is not None:
        return spec.restriction
    return np.arange(model.num_mechanisms)


def evaluate(spec: MetricSpec, outcome, model) -> float:
    """Evaluate ``spec`` on one :class:`~clusterps.decoder.DecodeOutcome`.

    Cluster metrics of an outcome without clusters are 0 without consulting
    the restriction, so cluster-free shots never raise.
    """
    if spec.is_cluster and not outcome.clusters:
        return 0.0
    if spec.family == CLUSTER_SIZE:
        return cluster_size_norm_fraction(outcome.clusters, _restriction_of(spec, model), spec.alpha)
    if spec.family == CLUSTER_LLR:
        return cluster_llr_norm_fraction(outcome.clusters, _restriction_of(spec, model), spec.alpha, model.llrs)
    if spec.family == CORRECTION_WEIGHT:
        return correction_weight(outcome.correction, model.llrs)
    return detector_density(outcome.syndrome)


def evaluate_batch(specs: Sequence[MetricSpec], model, labels, corrections, syndromes) -> np.ndarray:
    """Vectorized :func:`evaluate` over shots; returns an (S, M) array.

    ``labels[s, j]`` is the cluster index of mechanism j in shot s (-1 when
    unclustered), as produced by ``BpLsdDecoder.decode_batch``.
    """
    labels = np.asarray(labels)
    n_shots, n = labels.shape
    out = np.zeros((n_shots, len(specs)))
    llrs = np.asarray(model.llrs, dtype=np.float64)
    cache: dict[bytes, tuple[np.ndarray, np.ndarray, int, float]] = {}
    for m, spec in enumerate(specs):
        if spec.family == CORRECTION_WEIGHT:
            out[:, m] = np.asarray(corrections, dtype=np.float64) @ llrs
            continue
        if spec.family == DETECTOR_DENSITY:
            syn = np.asarray(syndromes)
            if syn.shape[1] == 0:
                raise ValueError("detector density needs at least one detector")
            out[:, m] = np.count_nonzero(syn, axis=1) / syn.shape[1]
            continue
        restriction = _restriction_of(spec, model)
        key = restriction.tobytes()
        if key not in cache:
            mask = np.zeros(n, dtype=bool)
            mask[restriction] = True
            lab = np.where(mask[None, :], labels, -1)
            rows, cols = np.nonzero(lab >= 0)
            flat = rows * n + lab[rows, cols]
            sizes = np.bincount(flat, minlength=n_shots * n).reshape(n_shots, n).astype(np.float64)
            masses = np.bincount(flat, weights=llrs[cols], minlength=n_shots * n).reshape(n_shots, n)
            cache[key] = (sizes, masses, restriction.size, float(llrs[restriction].sum()))
        sizes, masses, count, total = cache[key]
        vals, denom = (sizes, count) if spec.family == CLUSTER_SIZE else (masses, total)
        present = sizes > 0
        nonempty = present.any(axis=1)
        has_clusters = (labels >= 0).any(axis=1)
        if denom == 0 and has_clusters.any():
            raise ValueError("restriction is empty or has zero total LLR; the metric is undefined")
        frac = vals / denom if denom else vals
        if math.isinf(spec.alpha):
            num = frac.max(axis=1)
        else:
            num = np.sum(np.where(present, frac, 0.0) ** spec.alpha, axis=1) ** (1.0 / spec.alpha)
        out[:, m] = np.where(nonempty, num, 0.0)
    return out
