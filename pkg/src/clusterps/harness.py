"""Monte Carlo driver: sample, decode once, sweep cutoffs, report.

Every shot is decoded exactly once. Global mode records the metric values of
each shot; real-time mode records the committed-cluster metric at every
checkpoint. Cutoffs are then applied to the records, so all cutoffs see the
same shots and decoder outputs.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import subprocess
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from . import __version__, _kernels
from .decoder import BpConfig, BpLsdDecoder, DecodingError
from .dem import DetectorErrorModel, sample_batch
from .metrics import CLUSTER_SIZE, MetricSpec, evaluate_batch, format_alpha
from .oracle import OracleLimit, ml_decode_exhaustive
from .window import WindowConfig, WindowPlan

AUTO_QUANTILES = (0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 0.995, 0.999)

CSV_COLUMNS = (
    "code", "p", "T", "mode", "W", "F", "L", "metric", "alpha", "cutoff", "shots", "accepted",
    "errors", "p_log", "p_log_lo", "p_log_hi", "p_abort", "t_accepted_mean",
)


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    model: DetectorErrorModel
    shots: int
    seed: int
    metrics: tuple[MetricSpec, ...]
    mode: str = "global"
    window: Optional[WindowConfig] = None
    lookback: int = 1
    cutoffs: Union[str, tuple[float, ...]] = "auto"
    restrict: Optional[str] = None
    bp: BpConfig = field(default_factory=BpConfig)
    conv_max_conf: bool = False
    with_oracle: bool = False
    code: str = ""
    p: Optional[float] = None
    workers: int = 1
    chunk_size: int = 8192

    def __post_init__(self):
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.mode not in ("global", "realtime"):
            raise ValueError("mode must be 'global' or 'realtime'")
        if not self.metrics:
            raise ValueError("at least one metric is required")
        if self.restrict not in (None, "z"):
            raise ValueError("restriction selector must be 'z' or None")
        if self.mode == "realtime":
            if self.window is None:
                raise ValueError("realtime mode needs a window config")
            if self.model.detector_times is None:
                raise ValueError("realtime mode needs detector time coordinates")
            if self.lookback < 1:
                raise ValueError("lookback must be >= 1")
            bad = [m.label for m in self.metrics if not m.is_cluster]
            if bad:
                raise ValueError(f"realtime mode supports cluster metrics only, got {bad}")
        if isinstance(self.cutoffs, str) and self.cutoffs != "auto":
            raise ValueError("cutoffs must be 'auto' or a sequence of numbers")
        if self.workers < 1 or self.chunk_size < 1:
            raise ValueError("workers and chunk_size must be >= 1")

    @property
    def rounds(self) -> int:
        return self.model.num_rounds if self.model.detector_times is not None else 1

    def restriction(self) -> Optional[np.ndarray]:
        return self.model.z_mechanisms() if self.restrict == "z" else None

    def metric_specs(self) -> list[MetricSpec]:
        r = self.restriction()
        return [m.restricted_to(r) if r is not None else m for m in self.metrics]

    def echo(self) -> dict:
        return {
            "code": self.code,
            "p": self.p,
            "T": self.rounds,
            "num_detectors": self.model.num_detectors,
            "num_mechanisms": self.model.num_mechanisms,
            "num_observables": self.model.num_observables,
            "shots": self.shots,
            "seed": self.seed,
            "mode": self.mode,
            "window": None if self.window is None else asdict(self.window),
            "lookback": self.lookback if self.mode == "realtime" else None,
            "metrics": [m.label for m in self.metrics],
            "cutoffs": self.cutoffs if isinstance(self.cutoffs, str) else list(self.cutoffs),
            "restrict": self.restrict,
            "bp": asdict(self.bp),
            "conv_max_conf": self.conv_max_conf,
            "with_oracle": self.with_oracle,
            "chunk_size": self.chunk_size,
        }


@dataclass(frozen=True, eq=False)
class ShotRecords:
    """Per-shot records of one experiment.

    ``values`` is (S, M) in global mode and (S, C, M) in real-time mode,
    with C checkpoints at windows ``checkpoint_windows``.
    """

    errors: np.ndarray
    values: np.ndarray
    checkpoint_windows: Optional[np.ndarray] = None
    checkpoint_rounds: Optional[np.ndarray] = None
    oracle_errors: Optional[np.ndarray] = None


@dataclass(frozen=True)
class SweepResult:
    metric: str
    alpha: Optional[float]
    cutoff: float
    n_shots: int
    n_accepted: int
    n_errors: int
    p_log: Optional[float]
    p_log_lo: Optional[float]
    p_log_hi: Optional[float]
    p_abort: float
    mean_rounds: float
    t_accepted_mean: Optional[float]
    n_early_aborts: int = 0


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    config: ExperimentConfig
    rows: list[SweepResult]
    records: ShotRecords


def wilson_interval(successes: int, trials: int) -> tuple[Optional[float], Optional[float]]:
    if trials == 0:
        return None, None
    lo, hi = proportion_confint(successes, trials, alpha=0.05, method="wilson")
    # clamp rounding noise so the interval always contains the point estimate
    p = successes / trials
    return float(min(max(lo, 0.0), p)), float(max(min(hi, 1.0), p))


def auto_cutoffs(values: np.ndarray) -> list[float]:
    """Quantiles of ``values`` plus the maximum, deduplicated and sorted."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return [0.0]
    qs = np.quantile(values, AUTO_QUANTILES)
    return sorted(set(float(x) for x in qs) | {float(values.max())})


def _summarize(spec: MetricSpec, cutoff: float, accepted: np.ndarray, errors: np.ndarray, rounds: np.ndarray,
               early: int = 0) -> SweepResult:
    n = accepted.size
    n_acc = int(accepted.sum())
    n_err = int(errors[accepted].sum())
    lo, hi = wilson_interval(n_err, n_acc)
    total_rounds = float(rounds.sum())
    return SweepResult(
        metric=spec.short_name,
        alpha=spec.alpha,
        cutoff=float(cutoff),
        n_shots=n,
        n_accepted=n_acc,
        n_errors=n_err,
        p_log=n_err / n_acc if n_acc else None,
        p_log_lo=lo,
        p_log_hi=hi,
        p_abort=1.0 - n_acc / n,
        mean_rounds=total_rounds / n,
        t_accepted_mean=total_rounds / n_acc if n_acc else None,
        n_early_aborts=early,
    )


def sweep_global(spec: MetricSpec, values: np.ndarray, errors: np.ndarray, rounds: int,
                 cutoffs: Sequence[float]) -> list[SweepResult]:
    rounds_arr = np.full(values.size, rounds, dtype=np.int64)
    return [_summarize(spec, c, values <= c, errors, rounds_arr) for c in cutoffs]


def realtime_verdicts(q: np.ndarray, cutoff: float, checkpoint_rounds: np.ndarray, rounds: int):
    """Abort checkpoint (-1 if accepted) and rounds charged, per shot.

    ``q`` is (S, C): metric per checkpoint.
    """
    over = np.maximum.accumulate(q, axis=1) > cutoff
    aborted = over[:, -1] if q.shape[1] else np.zeros(q.shape[0], dtype=bool)
    first = np.where(aborted, np.argmax(over, axis=1), -1)
    charged = np.where(aborted, checkpoint_rounds[np.maximum(first, 0)], rounds)
    return first, charged


def sweep_realtime(spec: MetricSpec, q: np.ndarray, errors: np.ndarray, checkpoint_rounds: np.ndarray,
                   rounds: int, cutoffs: Sequence[float]) -> list[SweepResult]:
    out = []
    last = q.shape[1] - 1
    for c in cutoffs:
        first, charged = realtime_verdicts(q, c, checkpoint_rounds, rounds)
        accepted = first < 0
        early = int(np.count_nonzero((first >= 0) & (first < last)))
        out.append(_summarize(spec, c, accepted, errors, charged, early))
    return out


@dataclass(frozen=True)
class RoundFit:
    p_abort_round: float
    G: float
    intercept: float
    r_squared: float
    rounds: tuple[int, ...]
    p_log_per_round: Optional[tuple[float, ...]] = None
    p_log_slope: Optional[float] = None


def _linfit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return float(slope), float(intercept), r2


def per_round_fit(rounds: Sequence[int], p_abort: Sequence[float], p_log: Optional[Sequence[float]] = None) -> RoundFit:
    """Fit ``ln(1 - p_abort) = -G T + b``; ``p_abort_round = 1 - exp(-G)``."""
    t = np.asarray(rounds, dtype=np.float64)
    pa = np.asarray(p_abort, dtype=np.float64)
    keep = pa < 1.0
    if not keep.all():
        warnings.warn("dropping points with p_abort = 1 from the per-round fit", RuntimeWarning, stacklevel=2)
    if np.unique(t[keep]).size < 3:
        raise ValueError("per-round fit needs at least 3 distinct T values")
    slope, intercept, r2 = _linfit(t[keep], np.log1p(-pa[keep]))
    g = -slope
    per_round = slope_log = None
    if p_log is not None:
        pl = np.asarray(p_log, dtype=np.float64)
        per_round = tuple(float(x) for x in pl / t)
        slope_log = _linfit(t, pl)[0]
    return RoundFit(
        p_abort_round=float(-np.expm1(-g)),
        G=g,
        intercept=intercept,
        r_squared=r2,
        rounds=tuple(int(x) for x in t[keep]),
        p_log_per_round=per_round,
        p_log_slope=slope_log,
    )


# --- shot collection -------------------------------------------------------


def _any_error(predicted: np.ndarray, actual: np.ndarray) -> np.ndarray:
    return np.any(predicted != actual, axis=1)


class _Collector:
    """Decodes shot ranges for one config; instances are rebuilt in workers."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        model = config.model
        self.specs = config.metric_specs()
        self.decoder = BpLsdDecoder(model, config.bp)
        if config.mode == "realtime":
            self.plan = WindowPlan.build(model, config.window)
            self.flat = self.plan.flatten()
            restriction = config.restriction()
            mask = np.zeros(model.num_mechanisms, dtype=bool)
            mask[np.arange(model.num_mechanisms) if restriction is None else restriction] = True
            self.restrict = mask
            llr = np.ascontiguousarray(model.llrs, dtype=np.float64)
            self.commit_cnt = np.array([np.count_nonzero(mask[w.commit]) for w in self.plan.windows], dtype=np.float64)
            self.commit_mass = np.array([llr[w.commit][mask[w.commit]].sum() for w in self.plan.windows])
            n_win = len(self.plan)
            self.ck_windows = np.array(
                [w for w in range(n_win) if w >= config.lookback - 1 or w == n_win - 1], dtype=np.int64
            )
            self.ck_rounds = np.array([self.plan.rounds_at(int(w)) for w in self.ck_windows], dtype=np.int64)
            self.families = np.array([0 if s.family == CLUSTER_SIZE else 1 for s in self.specs], dtype=np.int64)
            self.alphas = np.array([s.alpha for s in self.specs], dtype=np.float64)
            self.csc = model.check_matrix
            self.llr = llr
        self._oracle_cache: dict[bytes, int] = {}

    def oracle_errors(self, syndromes: np.ndarray, flips: np.ndarray) -> np.ndarray:
        model = self.config.model
        out = np.zeros(syndromes.shape[0], dtype=bool)
        for i, s in enumerate(syndromes):
            key = s.tobytes()
            if key not in self._oracle_cache:
                res = ml_decode_exhaustive(model, s, OracleLimit())
                self._oracle_cache[key] = int(res.logical_class)
            cls = self._oracle_cache[key]
            actual = int(sum(int(b) << l for l, b in enumerate(flips[i])))
            out[i] = cls != actual
        return out

    def collect(self, start: int, count: int):
        cfg = self.config
        _, syn, flips = sample_batch(cfg.model, cfg.seed, start, count)
        oracle = self.oracle_errors(syn, flips) if cfg.with_oracle else None
        if cfg.mode == "global":
            corr, _, labels = self.decoder.decode_batch(syn, cfg.conv_max_conf)
            errors = _any_error(self.decoder.predicted_flips(corr), flips)
            values = evaluate_batch(self.specs, cfg.model, labels, corr, syn)
            return errors, values, oracle, corr, syn
        corr, q = self.realtime(syn)
        errors = _any_error(self.decoder.predicted_flips(corr), flips)
        return errors, q, oracle, corr, syn

    def realtime(self, syn: np.ndarray):
        cfg = self.config
        n_shots = syn.shape[0]
        corr = np.empty((n_shots, cfg.model.num_mechanisms), dtype=np.uint8)
        q = np.zeros((n_shots, self.ck_windows.size, len(self.specs)))
        ok = np.empty(n_shots, dtype=np.bool_)
        f = self.flat
        _kernels.realtime_batch(
            f["w_det_ptr"], f["w_dets"], f["w_mech_ptr"], f["w_mechs"], f["w_commit"],
            f["w_cptr_off"], f["w_cptr"], f["w_mptr_off"], f["w_mptr"], f["w_edge_off"],
            f["w_chk_mech"], f["w_mech_chk"], f["w_mech_edge"],
            self.csc.indptr.astype(np.int64), self.csc.indices.astype(np.int64), self.llr, self.restrict,
            self.commit_cnt, self.commit_mass, np.ascontiguousarray(syn), cfg.bp.max_iter, cfg.bp.scaling,
            cfg.conv_max_conf, cfg.lookback, self.families, self.alphas, corr, q, ok,
        )
        if not ok.all():
            raise DecodingError(f"window decoding failed on shot {int(np.argmin(ok))} of the chunk")
        return corr, q


_WORKER: Optional[_Collector] = None


def _worker_init(config: ExperimentConfig) -> None:
    global _WORKER
    _WORKER = _Collector(config)


def _worker_collect(span: tuple[int, int]):
    errors, values, oracle, _, _ = _WORKER.collect(*span)
    return errors, values, oracle


def collect_records(config: ExperimentConfig) -> ShotRecords:
    spans = [(s, min(config.chunk_size, config.shots - s)) for s in range(0, config.shots, config.chunk_size)]
    if config.workers > 1 and len(spans) > 1:
        with ProcessPoolExecutor(config.workers, initializer=_worker_init, initargs=(config,)) as pool:
            parts = list(pool.map(_worker_collect, spans))
        collector = None
    else:
        collector = _Collector(config)
        parts = [collector.collect(*span)[:3] for span in spans]
    errors = np.concatenate([p[0] for p in parts])
    values = np.concatenate([p[1] for p in parts])
    oracle = np.concatenate([p[2] for p in parts]) if config.with_oracle else None
    if config.mode == "global":
        return ShotRecords(errors, values, oracle_errors=oracle)
    collector = collector or _Collector(config)
    return ShotRecords(errors, values, collector.ck_windows, collector.ck_rounds, oracle)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    records = collect_records(config)
    rows: list[SweepResult] = []
    rounds = config.rounds
    for m, spec in enumerate(config.metrics):
        if config.mode == "global":
            vals = records.values[:, m]
            cutoffs = auto_cutoffs(vals) if config.cutoffs == "auto" else list(config.cutoffs)
            rows.extend(sweep_global(spec, vals, records.errors, rounds, cutoffs))
        else:
            q = records.values[:, :, m]
            peak = q.max(axis=1) if q.shape[1] else np.zeros(q.shape[0])
            cutoffs = auto_cutoffs(peak) if config.cutoffs == "auto" else list(config.cutoffs)
            rows.extend(sweep_realtime(spec, q, records.errors, records.checkpoint_rounds, rounds, cutoffs))
    return ExperimentResult(config, rows, records)


# --- output ----------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def results_csv(results: Sequence[ExperimentResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for res in results:
        cfg = res.config
        realtime = cfg.mode == "realtime"
        for row in res.rows:
            writer.writerow([
                cfg.code,
                _fmt(cfg.p),
                _fmt(cfg.rounds),
                cfg.mode,
                _fmt(cfg.window.window_size) if realtime else "",
                _fmt(cfg.window.commit_size) if realtime else "",
                _fmt(cfg.lookback) if realtime else "",
                row.metric,
                format_alpha(row.alpha),
                _fmt(row.cutoff),
                _fmt(row.n_shots),
                _fmt(row.n_accepted),
                _fmt(row.n_errors),
                _fmt(row.p_log),
                _fmt(row.p_log_lo),
                _fmt(row.p_log_hi),
                _fmt(row.p_abort),
                _fmt(row.t_accepted_mean),
            ])
    return buf.getvalue()


def version_string() -> str:
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True, timeout=5,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        )
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def manifest(results: Sequence[ExperimentResult]) -> dict:
    out = {"version": version_string(), "experiments": []}
    for res in results:
        entry = {"config": res.config.echo()}
        if res.records.oracle_errors is not None:
            oe = res.records.oracle_errors
            lo, hi = wilson_interval(int(oe.sum()), oe.size)
            entry["oracle"] = {"errors": int(oe.sum()), "shots": int(oe.size), "p_log": float(oe.mean()),
                               "p_log_lo": lo, "p_log_hi": hi}
        out["experiments"].append(entry)
    return out


def plot_results(results: Sequence[ExperimentResult], stem: str) -> list[str]:
    """Write ``<stem>_tradeoff.svg`` and ``<stem>_time.svg``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    for suffix, x_of, xlabel in (
        ("tradeoff", lambda r: r.p_abort, "p_abort"),
        ("time", lambda r: r.t_accepted_mean, "mean rounds per accepted shot"),
    ):
        fig, ax = plt.subplots(figsize=(5, 4))
        for res in results:
            by_metric: dict[str, list[SweepResult]] = {}
            for row in res.rows:
                by_metric.setdefault(f"{row.metric}:{format_alpha(row.alpha)}".rstrip(":"), []).append(row)
            for label, rows in by_metric.items():
                pts = sorted((x_of(r), r.p_log) for r in rows if r.p_log and x_of(r))
                if pts:
                    ax.plot(*zip(*pts), marker="o", ms=3, label=f"{res.config.mode} {label}")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("p_log")
        if ax.get_legend_handles_labels()[0]:
            ax.legend(fontsize=7)
        fig.tight_layout()
        path = f"{stem}_{suffix}.svg"
        fig.savefig(path)
        plt.close(fig)
        paths.append(path)
    return paths


def emit_results(results: Sequence[ExperimentResult], path: str, plots: bool = False) -> list[str]:
    """Write the CSV to ``path`` and a JSON manifest next to it."""
    with open(path, "w", newline="") as fh:
        fh.write(results_csv(results))
    stem = os.path.splitext(path)[0]
    man_path = stem + ".json"
    with open(man_path, "w") as fh:
        json.dump(manifest(results), fh, indent=2, sort_keys=True)
        fh.write("\n")
    written = [path, man_path]
    if plots:
        written.extend(plot_results(results, stem))
    return written
