"""Sliding-window decoding with window size W and commit size F.

Window w covers detectors with ``wF <= t_i <= wF + W - 1``. Its active
mechanisms are those touching a window detector that were not committed by an
earlier window. After inner decoding, mechanisms touching a detector in rounds
``[wF, wF + F - 1]`` are committed (all active mechanisms in the final
window), the global correction is updated and the residual syndrome is
flipped accordingly. Decoding stops after the first window with
``wF + W - 1 >= max_i t_i``.

Which mechanisms are active and committed in each window does not depend on
the syndrome, so the per-window sub-models are precomputed once in a
:class:`WindowPlan`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .decoder import BpConfig, BpLsdDecoder, Cluster, DecodeOutcome, TannerArrays
from .dem import DetectorErrorModel


class MissingTimesError(ValueError):
    """Windowed decoding needs detector time coordinates."""


@dataclass(frozen=True)
class WindowConfig:
    window_size: int
    commit_size: int

    def __post_init__(self):
        if self.window_size < 1:
            raise ValueError("window size W must be >= 1")
        if not 1 <= self.commit_size <= self.window_size:
            raise ValueError("commit size F must satisfy 1 <= F <= W")


def _times(model: DetectorErrorModel) -> np.ndarray:
    if model.detector_times is None:
        raise MissingTimesError("model has no detector time coordinates (times: header)")
    return model.detector_times


def window_detectors(model: DetectorErrorModel, config: WindowConfig, w: int) -> np.ndarray:
    t = _times(model)
    lo = w * config.commit_size
    return np.flatnonzero((t >= lo) & (t <= lo + config.window_size - 1))


def active_mechanisms(model: DetectorErrorModel, detectors, committed) -> np.ndarray:
    """Mechanisms touching ``detectors`` minus ``committed`` (index set or boolean mask)."""
    touching = model.mechanisms_touching(detectors)
    committed = np.asarray(committed)
    if committed.dtype == bool:
        return touching[~committed[touching]]
    return np.setdiff1d(touching, committed.astype(np.int64), assume_unique=False)


def is_final_window(t_max: int, config: WindowConfig, w: int) -> bool:
    return w * config.commit_size + config.window_size - 1 >= t_max


def num_windows(t_max: int, config: WindowConfig) -> int:
    w = 0
    while not is_final_window(t_max, config, w):
        w += 1
    return w + 1


@dataclass(frozen=True, eq=False)
class WindowSpec:
    """Shot-independent structure of one window; all indices are global."""

    index: int
    detectors: np.ndarray
    active: np.ndarray
    commit_mask: np.ndarray
    final: bool
    submodel: Optional[DetectorErrorModel]

    @property
    def commit(self) -> np.ndarray:
        return self.active[self.commit_mask]


@dataclass(frozen=True, eq=False)
class WindowPlan:
    model: DetectorErrorModel
    config: WindowConfig
    windows: tuple[WindowSpec, ...]

    @classmethod
    def build(cls, model: DetectorErrorModel, config: WindowConfig) -> "WindowPlan":
        t = _times(model)
        t_max = int(t.max()) if t.size else 0
        committed = np.zeros(model.num_mechanisms, dtype=bool)
        h = model.check_matrix
        specs = []
        for w in range(num_windows(t_max, config)):
            dets = window_detectors(model, config, w)
            active = active_mechanisms(model, dets, committed)
            final = is_final_window(t_max, config, w)
            if final:
                commit_mask = np.ones(active.size, dtype=bool)
            else:
                lo = w * config.commit_size
                commit_dets = np.flatnonzero((t >= lo) & (t <= lo + config.commit_size - 1))
                commit_mask = np.isin(active, model.mechanisms_touching(commit_dets))
            committed[active[commit_mask]] = True
            sub = None
            if active.size:
                sub = DetectorErrorModel(
                    check_matrix=h[dets][:, active],
                    observable_matrix=np.zeros((0, active.size), dtype=np.uint8),
                    priors=model.priors[active],
                )
            specs.append(WindowSpec(w, dets, active, commit_mask, final, sub))
        return cls(model, config, tuple(specs))

    def __len__(self) -> int:
        return len(self.windows)

    @cached_property
    def decoders(self) -> dict:
        return {}

    def decoder_for(self, w: int, bp: BpConfig) -> Optional[BpLsdDecoder]:
        spec = self.windows[w]
        if spec.submodel is None:
            return None
        key = (w, bp)
        if key not in self.decoders:
            self.decoders[key] = BpLsdDecoder(spec.submodel, bp)
        return self.decoders[key]

    def rounds_at(self, w: int) -> int:
        """Syndrome rounds consumed once window ``w`` has been decoded."""
        cfg = self.config
        return min(self.model.num_rounds, w * cfg.commit_size + cfg.window_size)

    def flatten(self) -> dict[str, np.ndarray]:
        """Concatenated per-window arrays consumed by ``_kernels.realtime_batch``."""
        det_ptr, mech_ptr = [0], [0]
        dets, mechs, commit = [], [], []
        cptr_off, mptr_off, edge_off = [0], [0], [0]
        cptr, mptr, chk_mech, mech_chk, mech_edge = [], [], [], [], []
        for spec in self.windows:
            dets.append(spec.detectors)
            mechs.append(spec.active)
            commit.append(spec.commit_mask)
            det_ptr.append(det_ptr[-1] + spec.detectors.size)
            mech_ptr.append(mech_ptr[-1] + spec.active.size)
            if spec.submodel is None:
                tanner = TannerArrays.from_matrix(np.zeros((spec.detectors.size, 0), dtype=np.uint8))
            else:
                tanner = TannerArrays.from_matrix(spec.submodel.check_matrix)
            cptr.append(tanner.chk_ptr)
            mptr.append(tanner.mech_ptr)
            chk_mech.append(tanner.chk_mech)
            mech_chk.append(tanner.mech_chk)
            mech_edge.append(tanner.mech_edge)
            cptr_off.append(cptr_off[-1] + tanner.chk_ptr.size)
            mptr_off.append(mptr_off[-1] + tanner.mech_ptr.size)
            edge_off.append(edge_off[-1] + tanner.chk_mech.size)

        def cat(parts, dtype=np.int64):
            return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype)

        return dict(
            w_det_ptr=np.array(det_ptr, dtype=np.int64),
            w_dets=cat(dets),
            w_mech_ptr=np.array(mech_ptr, dtype=np.int64),
            w_mechs=cat(mechs),
            w_commit=cat(commit, np.bool_),
            w_cptr_off=np.array(cptr_off, dtype=np.int64),
            w_cptr=cat(cptr),
            w_mptr_off=np.array(mptr_off, dtype=np.int64),
            w_mptr=cat(mptr),
            w_edge_off=np.array(edge_off, dtype=np.int64),
            w_chk_mech=cat(chk_mech),
            w_mech_chk=cat(mech_chk),
            w_mech_edge=cat(mech_edge),
        )


@dataclass(frozen=True, eq=False)
class WindowRecord:
    """Outcome of one window.

    ``clusters`` use local indices into ``active``, which maps them to global
    mechanism indices.
    """

    index: int
    active: np.ndarray
    commit_mask: np.ndarray
    clusters: list[Cluster]
    local_correction: np.ndarray
    bp_converged: bool
    final: bool

    @property
    def commit(self) -> np.ndarray:
        return self.active[self.commit_mask]

    def global_clusters(self) -> list[np.ndarray]:
        return [self.active[c.mechanisms] for c in self.clusters]


@dataclass
class WindowState:
    plan: WindowPlan
    global_correction: np.ndarray
    residual_syndrome: np.ndarray
    committed: np.ndarray
    window_index: int = 0
    records: list[WindowRecord] = field(default_factory=list)
    aborted: bool = False

    @classmethod
    def start(cls, plan: WindowPlan, syndrome) -> "WindowState":
        model = plan.model
        s = np.array(syndrome, dtype=np.uint8)
        if s.shape != (model.num_detectors,):
            raise ValueError(f"syndrome must have length {model.num_detectors}")
        return cls(
            plan=plan,
            global_correction=np.zeros(model.num_mechanisms, dtype=np.uint8),
            residual_syndrome=s,
            committed=np.zeros(model.num_mechanisms, dtype=bool),
        )

    @property
    def finished(self) -> bool:
        return self.aborted or self.window_index >= len(self.plan)


InnerDecoder = Callable[[DetectorErrorModel, np.ndarray], DecodeOutcome]


def decode_window(
    model: DetectorErrorModel,
    state: WindowState,
    config: WindowConfig,
    inner: Optional[InnerDecoder] = None,
    bp: Optional[BpConfig] = None,
    conv_max_conf: bool = False,
) -> WindowState:
    """Decode the next window of ``state`` in place and return it.

    ``inner(submodel, local_syndrome)`` overrides the default BP+LSD decoder.
    """
    if state.finished:
        raise RuntimeError("window session already finished")
    plan = state.plan
    if plan.model is not model or plan.config != config:
        raise ValueError("state was started from a different model or window config")
    spec = plan.windows[state.window_index]
    local_syn = state.residual_syndrome[spec.detectors]
    if spec.submodel is None:
        if local_syn.any():
            raise RuntimeError(f"window {spec.index}: violated detectors but no active mechanisms")
        clusters, local_corr, converged = [], np.zeros(0, dtype=np.uint8), True
    else:
        if inner is None:
            outcome = plan.decoder_for(spec.index, bp or BpConfig()).decode(local_syn, conv_max_conf)
        else:
            outcome = inner(spec.submodel, local_syn)
        clusters, local_corr, converged = outcome.clusters, outcome.correction, outcome.bp_converged
    commit = spec.commit
    flips = commit[local_corr[spec.commit_mask].astype(bool)]
    if np.any(state.committed[commit]):
        raise RuntimeError("mechanism committed twice")
    state.global_correction[flips] ^= 1
    if flips.size:
        state.residual_syndrome ^= model.syndrome_of(np.isin(np.arange(model.num_mechanisms), flips))
    state.committed[commit] = True
    state.records.append(
        WindowRecord(spec.index, spec.active, spec.commit_mask, clusters, local_corr, converged, spec.final)
    )
    state.window_index += 1
    return state


def run_windows(
    model: DetectorErrorModel,
    syndrome,
    config: WindowConfig,
    inner: Optional[InnerDecoder] = None,
    observer: Optional[Callable[[WindowState, WindowRecord], bool]] = None,
    bp: Optional[BpConfig] = None,
    plan: Optional[WindowPlan] = None,
    conv_max_conf: bool = False,
):
    """Decode all windows of one shot.

    ``observer(state, record)`` runs after every window; returning True
    aborts the session. Returns ``(correction, predicted_flips, records)``;
    after an abort the correction covers only the committed windows.
    """
    plan = plan or WindowPlan.build(model, config)
    state = WindowState.start(plan, syndrome)
    while not state.finished:
        decode_window(model, state, config, inner, bp, conv_max_conf)
        if observer is not None and observer(state, state.records[-1]):
            state.aborted = True
    flips = model.observables_flipped(state.global_correction)
    return state.global_correction, flips, state.records
