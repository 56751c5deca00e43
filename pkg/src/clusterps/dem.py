"""Detector error models: storage, text format, sampling and the fault graph.

Text format (one instruction per line)::

    times: 0 0 1 1          # optional, detector round coordinates
    z_detectors: 0 1 2 3    # optional, detectors counted as Z-type
    error(0.01) D0 D1 L0
    # comments and blank lines are ignored

Repeated detector/observable targets on one ``error`` line cancel mod 2.
Repeated identical ``error`` lines stay separate mechanisms.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

# Shots are generated in fixed-size blocks, each block drawing from its own
# Philox stream keyed by (seed, block index). Shot i therefore depends only
# on (seed, i), never on how many shots were requested.
SAMPLE_BLOCK = 1024


class DemParseError(ValueError):
    """Malformed DEM text. ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: int):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class DemDomainError(ValueError):
    """A prior probability outside (0, 1)."""


class PriorFoldWarning(UserWarning):
    """A prior above 0.5 was replaced by 1 - p."""


@dataclass(frozen=True, eq=False)
class DetectorErrorModel:
    """Independent error mechanisms over detectors and logical observables.

    ``check_matrix`` is r x N and ``observable_matrix`` is k x N, both stored
    as CSC ``uint8`` matrices. ``priors`` may contain zeros only when the model
    is built programmatically (e.g. a noiseless phenomenological model);
    such mechanisms never fire and carry an infinite LLR.
    """

    check_matrix: sp.csc_matrix
    observable_matrix: sp.csc_matrix
    priors: np.ndarray
    detector_times: Optional[np.ndarray] = None
    z_detectors: Optional[np.ndarray] = None
    folded: tuple[int, ...] = field(default=())

    def __post_init__(self):
        h = sp.csc_matrix(self.check_matrix, dtype=np.uint8)
        obs = sp.csc_matrix(self.observable_matrix, dtype=np.uint8)
        h.sort_indices()
        obs.sort_indices()
        priors = np.asarray(self.priors, dtype=np.float64).copy()
        object.__setattr__(self, "check_matrix", h)
        object.__setattr__(self, "observable_matrix", obs)
        object.__setattr__(self, "priors", priors)
        if h.shape[1] != obs.shape[1] or h.shape[1] != priors.shape[0]:
            raise ValueError("check matrix, observable matrix and priors disagree on N")
        if np.any((priors < 0) | (priors > 0.5)) or np.any(np.isnan(priors)):
            raise ValueError("priors must lie in [0, 0.5]")
        dead = np.flatnonzero((np.diff(h.indptr) == 0) & (np.diff(obs.indptr) == 0))
        if dead.size:
            raise ValueError(f"mechanism {int(dead[0])} flips no detector or observable")
        if self.detector_times is not None:
            times = np.asarray(self.detector_times, dtype=np.int64).copy()
            if times.shape != (h.shape[0],):
                raise ValueError("detector_times must have one entry per detector")
            if np.any(times < 0):
                raise ValueError("detector times must be nonnegative")
            object.__setattr__(self, "detector_times", times)
        if self.z_detectors is not None:
            zd = np.unique(np.asarray(self.z_detectors, dtype=np.int64))
            if zd.size and (zd[0] < 0 or zd[-1] >= h.shape[0]):
                raise ValueError("z_detectors index out of range")
            object.__setattr__(self, "z_detectors", zd)
        for arr in (priors, self.detector_times, self.z_detectors):
            if arr is not None:
                arr.setflags(write=False)

    @classmethod
    def from_columns(
        cls,
        detector_columns: Sequence[Sequence[int]],
        observable_columns: Sequence[Sequence[int]],
        priors: Sequence[float],
        num_detectors: int,
        num_observables: int,
        detector_times=None,
        z_detectors=None,
        folded: tuple[int, ...] = (),
    ) -> "DetectorErrorModel":
        n = len(priors)
        return cls(
            check_matrix=_columns_to_csc(detector_columns, num_detectors, n),
            observable_matrix=_columns_to_csc(observable_columns, num_observables, n),
            priors=np.asarray(priors, dtype=np.float64),
            detector_times=detector_times,
            z_detectors=z_detectors,
            folded=folded,
        )

    @property
    def num_detectors(self) -> int:
        return self.check_matrix.shape[0]

    @property
    def num_mechanisms(self) -> int:
        return self.check_matrix.shape[1]

    @property
    def num_observables(self) -> int:
        return self.observable_matrix.shape[0]

    @property
    def num_rounds(self) -> int:
        if self.detector_times is None or self.detector_times.size == 0:
            raise ValueError("model has no detector time coordinates")
        return int(self.detector_times.max()) + 1

    @cached_property
    def llrs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            w = np.log((1.0 - self.priors) / self.priors)
        w.setflags(write=False)
        return w

    @cached_property
    def check_csr(self) -> sp.csr_matrix:
        m = self.check_matrix.tocsr()
        m.sort_indices()
        return m

    def detectors_of(self, j: int) -> np.ndarray:
        h = self.check_matrix
        return h.indices[h.indptr[j] : h.indptr[j + 1]]

    def observables_of(self, j: int) -> np.ndarray:
        o = self.observable_matrix
        return o.indices[o.indptr[j] : o.indptr[j + 1]]

    def syndrome_of(self, faults) -> np.ndarray:
        """``H @ faults mod 2`` for one vector or a batch (rows)."""
        return _mod2_apply(self.check_csr, faults)

    def observables_flipped(self, faults) -> np.ndarray:
        return _mod2_apply(self.observable_matrix.tocsr(), faults)

    def mechanisms_touching(self, detectors) -> np.ndarray:
        """Sorted mechanisms with a 1 in any of the given detector rows."""
        rows = self.check_csr[np.asarray(detectors, dtype=np.int64)]
        return np.unique(rows.indices).astype(np.int64)

    def z_mechanisms(self) -> np.ndarray:
        """Mechanisms that flip at least one Z-type detector.

        Without a ``z_detectors`` annotation every detector counts as Z-type.
        """
        zd = self.z_detectors
        if zd is None:
            zd = np.arange(self.num_detectors)
        return self.mechanisms_touching(zd)


def _columns_to_csc(columns, n_rows: int, n_cols: int) -> sp.csc_matrix:
    indptr = [0]
    indices: list[int] = []
    for col in columns:
        col = sorted(set(int(i) for i in col))
        if col and (col[0] < 0 or col[-1] >= n_rows):
            raise ValueError("row index out of range")
        indices.extend(col)
        indptr.append(len(indices))
    if len(indptr) - 1 != n_cols:
        raise ValueError("column count mismatch")
    data = np.ones(len(indices), dtype=np.uint8)
    return sp.csc_matrix((data, np.array(indices, dtype=np.int32), np.array(indptr)), shape=(n_rows, n_cols))


def _mod2_apply(mat: sp.csr_matrix, vecs) -> np.ndarray:
    v = np.asarray(vecs)
    if v.ndim == 1:
        return (mat.astype(np.int32) @ v.astype(np.int32) % 2).astype(np.uint8)
    return ((mat.astype(np.int32) @ v.T.astype(np.int32)) % 2).T.astype(np.uint8)


_ERROR_RE = re.compile(r"^error\(([^()\s]+)\)((?:\s+[DL]\d+)+)\s*$")
_TARGET_RE = re.compile(r"([DL])(\d+)")


def parse_dem(text: str) -> DetectorErrorModel:
    """Parse DEM text into a model.

    Raises ``DemParseError`` on malformed lines and ``DemDomainError`` for
    priors outside (0, 1). Priors in (0.5, 1) are folded to ``1 - p`` and a
    ``PriorFoldWarning`` is emitted; the folded indices are kept on the model.
    """
    det_cols: list[list[int]] = []
    obs_cols: list[list[int]] = []
    priors: list[float] = []
    folded: list[int] = []
    times = None
    z_dets = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("times:") or line.startswith("z_detectors:"):
            head, _, rest = line.partition(":")
            try:
                values = [int(tok) for tok in rest.split()]
            except ValueError:
                raise DemParseError(f"bad integer list in '{head}' header", lineno) from None
            if head == "times":
                times = values
            else:
                z_dets = values
            continue
        m = _ERROR_RE.match(line)
        if m is None:
            raise DemParseError(f"cannot parse instruction {raw.strip()!r}", lineno)
        try:
            p = float(m.group(1))
        except ValueError:
            raise DemParseError(f"bad probability {m.group(1)!r}", lineno) from None
        if not (0.0 < p < 1.0):
            raise DemDomainError(f"line {lineno}: prior {p!r} outside (0, 1)")
        if p > 0.5:
            folded.append(len(priors))
            warnings.warn(f"line {lineno}: prior {p!r} folded to {1.0 - p!r}", PriorFoldWarning, stacklevel=2)
            p = 1.0 - p
        dets: set[int] = set()
        obss: set[int] = set()
        for kind, idx in _TARGET_RE.findall(m.group(2)):
            target = dets if kind == "D" else obss
            target ^= {int(idx)}
        if not dets and not obss:
            raise DemParseError("all targets cancel; mechanism would be dead", lineno)
        det_cols.append(sorted(dets))
        obs_cols.append(sorted(obss))
        priors.append(p)

    r = max((c[-1] + 1 for c in det_cols if c), default=0)
    if times is not None:
        if len(times) < r:
            raise DemParseError(f"times header lists {len(times)} detectors but D{r - 1} is used", 1)
        r = len(times)
    k = max((c[-1] + 1 for c in obs_cols if c), default=0)
    return DetectorErrorModel.from_columns(
        det_cols,
        obs_cols,
        priors,
        num_detectors=r,
        num_observables=k,
        detector_times=None if times is None else np.array(times, dtype=np.int64),
        z_detectors=None if z_dets is None else np.array(z_dets, dtype=np.int64),
        folded=tuple(folded),
    )


def serialize_dem(model: DetectorErrorModel) -> str:
    """Canonical text: headers, then one ``error`` line per mechanism.

    Probabilities use the shortest repr that round-trips the 64-bit float.
    """
    lines = []
    if model.detector_times is not None:
        lines.append("times: " + " ".join(str(int(t)) for t in model.detector_times))
    if model.z_detectors is not None:
        lines.append("z_detectors: " + " ".join(str(int(i)) for i in model.z_detectors))
    for j in range(model.num_mechanisms):
        targets = [f"D{i}" for i in model.detectors_of(j)]
        targets += [f"L{i}" for i in model.observables_of(j)]
        lines.append(f"error({float(model.priors[j])!r}) " + " ".join(targets))
    return "\n".join(lines)


@dataclass(frozen=True)
class ShotSample:
    faults: np.ndarray
    syndrome: np.ndarray
    observable_flips: np.ndarray


def sample_batch(model: DetectorErrorModel, seed: int, start: int, count: int):
    """Sample shots ``start .. start+count-1`` as ``(faults, syndromes, flips)``.

    All three are ``uint8`` arrays with one row per shot.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    n = model.num_mechanisms
    first = start // SAMPLE_BLOCK
    last = (start + count - 1) // SAMPLE_BLOCK
    chunks = []
    for block in range(first, last + 1):
        rng = np.random.Generator(np.random.Philox(key=[int(seed) & 0xFFFFFFFFFFFFFFFF, block]))
        u = rng.random((SAMPLE_BLOCK, n))
        lo = max(start, block * SAMPLE_BLOCK) - block * SAMPLE_BLOCK
        hi = min(start + count, (block + 1) * SAMPLE_BLOCK) - block * SAMPLE_BLOCK
        chunks.append(u[lo:hi] < model.priors)
    faults = np.concatenate(chunks).astype(np.uint8)
    return faults, model.syndrome_of(faults), model.observables_flipped(faults)


def sample_shots(model: DetectorErrorModel, shots: int, seed: int) -> list[ShotSample]:
    faults, syndromes, flips = sample_batch(model, seed, 0, shots)
    return [ShotSample(f, s, o) for f, s, o in zip(faults, syndromes, flips)]


@dataclass(frozen=True)
class FaultGraph:
    """Mechanism adjacency: j ~ j' iff they share a detector."""

    adjacency: tuple[np.ndarray, ...]

    def neighbors(self, j: int) -> np.ndarray:
        return self.adjacency[j]

    def components(self, mechanisms) -> list[np.ndarray]:
        """Connected components of the subgraph induced by ``mechanisms``.

        Components are sorted internally and ordered by their smallest member.
        """
        members = set(int(j) for j in mechanisms)
        seen: set[int] = set()
        comps = []
        for start in sorted(members):
            if start in seen:
                continue
            stack = [start]
            seen.add(start)
            comp = []
            while stack:
                j = stack.pop()
                comp.append(j)
                for nb in self.adjacency[j]:
                    nb = int(nb)
                    if nb in members and nb not in seen:
                        seen.add(nb)
                        stack.append(nb)
            comps.append(np.array(sorted(comp), dtype=np.int64))
        return comps

    def is_connected(self, mechanisms) -> bool:
        mechanisms = list(mechanisms)
        return len(mechanisms) > 0 and len(self.components(mechanisms)) == 1


def build_fault_graph(model: DetectorErrorModel) -> FaultGraph:
    h = model.check_matrix.astype(np.int32)
    overlap = (h.T @ h).tocsr()
    overlap.setdiag(0)
    overlap.eliminate_zeros()
    overlap.sort_indices()
    adj = tuple(
        overlap.indices[overlap.indptr[j] : overlap.indptr[j + 1]].astype(np.int64)
        for j in range(model.num_mechanisms)
    )
    return FaultGraph(adj)
