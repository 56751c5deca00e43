"""BP+LSD decoding with cluster soft outputs.

BP always runs first; LSD then runs regardless of BP convergence so that
cluster statistics exist for every shot. The returned correction is the BP
hard decision when BP converged and the union of LSD local solutions
otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .dem import DetectorErrorModel


class DecodingError(RuntimeError):
    """LSD could not explain the syndrome (inconsistent with the check matrix)."""


@dataclass(frozen=True)
class BpConfig:
    max_iter: int = 30
    scaling: float = 1.0
    method: str = "min_sum"

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0.0 < self.scaling <= 1.0:
            raise ValueError("scaling must lie in (0, 1]")
        if self.method != "min_sum":
            raise ValueError("only min-sum BP is implemented")


@dataclass(frozen=True, eq=False)
class Cluster:
    mechanisms: np.ndarray
    llr_mass: float
    local_solution: np.ndarray

    @property
    def size(self) -> int:
        return int(self.mechanisms.size)


@dataclass(frozen=True, eq=False)
class DecodeOutcome:
    correction: np.ndarray
    bp_converged: bool
    posterior_llrs: np.ndarray
    clusters: list[Cluster]
    predicted_flips: np.ndarray
    syndrome: np.ndarray = field(repr=False)


@dataclass(frozen=True, eq=False)
class TannerArrays:
    chk_ptr: np.ndarray
    chk_mech: np.ndarray
    mech_ptr: np.ndarray
    mech_chk: np.ndarray
    mech_edge: np.ndarray

    @classmethod
    def from_matrix(cls, h) -> "TannerArrays":
        csr = sp.csr_matrix(h, dtype=np.uint8)
        csr.sort_indices()
        n_edges = csr.nnz
        edges = sp.csr_matrix((np.arange(n_edges, dtype=np.int64) + 1, csr.indices, csr.indptr), shape=csr.shape)
        csc = edges.tocsc()
        csc.sort_indices()
        return cls(
            chk_ptr=csr.indptr.astype(np.int64),
            chk_mech=csr.indices.astype(np.int64),
            mech_ptr=csc.indptr.astype(np.int64),
            mech_chk=csc.indices.astype(np.int64),
            mech_edge=csc.data.astype(np.int64) - 1,
        )

    def args(self):
        return self.chk_ptr, self.chk_mech, self.mech_ptr, self.mech_chk, self.mech_edge


def clusters_from_labels(labels: np.ndarray, llrs: np.ndarray, lsd_correction: np.ndarray) -> list[Cluster]:
    clustered = np.flatnonzero(labels >= 0)
    if clustered.size == 0:
        return []
    by_label = clustered[np.argsort(labels[clustered], kind="stable")]
    bounds = np.flatnonzero(np.diff(labels[by_label])) + 1
    out = []
    for members in np.split(by_label, bounds):
        members = np.sort(members)
        out.append(Cluster(members, float(llrs[members].sum()), lsd_correction[members].copy()))
    return out


class BpLsdDecoder:
    """Min-sum BP followed by LSD-0 clustering on one detector error model."""

    def __init__(self, model: DetectorErrorModel, config: Optional[BpConfig] = None):
        self.model = model
        self.config = config or BpConfig()
        self.tanner = TannerArrays.from_matrix(model.check_matrix)
        self._prior = np.ascontiguousarray(model.llrs, dtype=np.float64)
        self._obs = model.observable_matrix.tocsr().astype(np.int32)

    def _syndrome(self, syndrome) -> np.ndarray:
        s = np.ascontiguousarray(syndrome, dtype=np.uint8)
        if s.shape != (self.model.num_detectors,):
            raise ValueError(f"syndrome must have length {self.model.num_detectors}")
        return s

    def bp(self, syndrome):
        """Returns ``(posterior_llrs, hard_decision, converged)``."""
        s = self._syndrome(syndrome)
        n = self.model.num_mechanisms
        post = np.empty(n)
        hard = np.empty(n, dtype=np.uint8)
        t = self.tanner
        converged, _ = _kernels.bp_min_sum(
            t.chk_ptr, t.chk_mech, t.mech_ptr, t.mech_edge, self._prior, s,
            self.config.max_iter, self.config.scaling, post, hard,
        )
        return post, hard, bool(converged)

    def lsd(self, syndrome, posterior_llrs, on_grow: Optional[Callable[[int], None]] = None):
        """Returns ``(clusters, lsd_correction)``.

        ``on_grow`` is called with each mechanism in the order LSD added it.
        """
        s = self._syndrome(syndrome)
        n = self.model.num_mechanisms
        post = np.ascontiguousarray(posterior_llrs, dtype=np.float64)
        corr = np.empty(n, dtype=np.uint8)
        labels = np.empty(n, dtype=np.int64)
        order = np.empty(n, dtype=np.int64)
        t = self.tanner
        _, n_added, ok = _kernels.lsd(t.chk_ptr, t.chk_mech, t.mech_ptr, t.mech_chk, s, post, corr, labels, order)
        if not ok:
            raise DecodingError("syndrome cannot be explained by any set of mechanisms")
        if on_grow is not None:
            for j in order[:n_added]:
                on_grow(int(j))
        return clusters_from_labels(labels, self.model.llrs, corr), corr

    def decode(self, syndrome, conv_max_conf: bool = False) -> DecodeOutcome:
        s = self._syndrome(syndrome)
        post, hard, converged = self.bp(s)
        if converged and conv_max_conf:
            clusters, correction = [], hard
        else:
            clusters, lsd_corr = self.lsd(s, post)
            correction = hard if converged else lsd_corr
        flips = (self._obs @ correction.astype(np.int32)) % 2
        return DecodeOutcome(
            correction=correction,
            bp_converged=converged,
            posterior_llrs=post,
            clusters=clusters,
            predicted_flips=flips.astype(np.uint8),
            syndrome=s,
        )

    def decode_batch(self, syndromes, conv_max_conf: bool = False):
        """Decode rows of ``syndromes``.

        Returns ``(corrections, converged, labels)`` where ``labels[s, j]`` is
        the cluster index of mechanism j in shot s (-1 if unclustered).
        """
        syn = np.ascontiguousarray(syndromes, dtype=np.uint8)
        n_shots = syn.shape[0]
        n = self.model.num_mechanisms
        corrections = np.empty((n_shots, n), dtype=np.uint8)
        converged = np.empty(n_shots, dtype=np.bool_)
        labels = np.empty((n_shots, n), dtype=np.int64)
        bad = _kernels.decode_batch(
            *self.tanner.args(), self._prior, syn, self.config.max_iter, self.config.scaling,
            conv_max_conf, corrections, converged, labels,
        )
        if bad >= 0:
            raise DecodingError(f"shot {bad}: syndrome cannot be explained")
        return corrections, converged, labels

    def predicted_flips(self, corrections) -> np.ndarray:
        return ((self._obs @ np.asarray(corrections, dtype=np.int32).T) % 2).T.astype(np.uint8)


def bp_decode(model: DetectorErrorModel, syndrome, config: Optional[BpConfig] = None):
    return BpLsdDecoder(model, config).bp(syndrome)


def lsd_decode(model: DetectorErrorModel, syndrome, posterior_llrs) -> list[Cluster]:
    return BpLsdDecoder(model).lsd(syndrome, posterior_llrs)[0]


def decode(model: DetectorErrorModel, syndrome, config: Optional[BpConfig] = None,
           conv_max_conf: bool = False) -> DecodeOutcome:
    return BpLsdDecoder(model, config).decode(syndrome, conv_max_conf)
