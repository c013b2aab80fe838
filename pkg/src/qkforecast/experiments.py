"""In-domain benchmark, cross-region transfer and regime-separability runs."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .analysis import MetricsRecord, evaluate, fisher_ratio, kernel_pca, measure_latency
from .baselines import (
    ArModel,
    Forecaster,
    GbtConfig,
    LstmConfig,
    fine_tune_lstm,
    fit_ar,
    fit_gbt,
    fit_lstm,
    fit_persistence,
    residuals,
    rolling_forecast,
)
from .errors import MissingClass, MissingWindChannel, NotPositiveDefinite
from .synthgen import REGIME_COVARIATE
from .timeseries import (
    RegionSeries,
    SplitSpec,
    apply_normalization,
    concat,
    fit_covariate_stats,
    split,
)
from .vqkernel import (
    RBF_GAMMA_GRID,
    ExactKernel,
    RbfKernel,
    ResidualCorrector,
    RidgeSolution,
    clip_to_psd,
    gram_matrix,
    make_kernel,
    ridge_fit,
    xavier_init,
)

log = logging.getLogger(__name__)

MODEL_NAMES = ("persistence", "ar24", "gbt", "lstm", "proposed")
TRANSFER_MODES = ("in_domain", "zero_shot", "fine_tune")


@dataclass(frozen=True)
class ExperimentConfig:
    ar_order: int = 24
    gbt: GbtConfig = GbtConfig()
    lstm: LstmConfig = LstmConfig()
    kernel_kind: str = "surrogate"
    ridge_lambda: float = 5.0
    n_qubits: int = 6
    n_layers: int = 3
    alpha: float = 1.0
    ansatz_seed: int = 42
    correction: bool = True
    # what to do when K + lambda I is not positive definite: "clip" zeroes
    # the negative eigenvalues of K (recorded in the report), "error" raises
    indefinite_policy: str = "error"
    # hidden generator labels must never reach a forecaster
    exclude_covariates: tuple[str, ...] = (REGIME_COVARIATE,)
    fine_tune_hours: int = 720
    fine_tune_epochs: int = 5
    threads: int = 1
    seed: int = 0

    def kernel(self):
        spec = None
        if self.kernel_kind == "exact":
            spec = xavier_init(self.n_qubits, self.n_layers, self.ansatz_seed, self.alpha)
        return make_kernel(self.kernel_kind, spec)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["exclude_covariates"] = list(self.exclude_covariates)
        return d


class ProposedForecaster(Forecaster):
    """AR base forecast plus a kernel ridge estimate of its residual."""

    kind = "proposed"

    def __init__(self, base: ArModel, corrector: ResidualCorrector):
        self.base = base
        self.corrector = corrector

    @property
    def lookback(self) -> int:
        return self.base.lookback

    def predict_one_step(self, y_hist, x_hist) -> float:
        return self.corrector.apply(self.base.predict_one_step(y_hist, x_hist), x_hist[-1])


def fit_corrector(base: Forecaster, validation: RegionSeries, warm: RegionSeries,
                  config: ExperimentConfig) -> tuple[ResidualCorrector, dict]:
    """Kernel ridge head on the base model's out-of-sample validation residuals.

    Returns the corrector and a small audit record of the fit.
    """
    res = residuals(base, validation, warm)
    kernel = config.kernel()
    K = gram_matrix(res.x, kernel, threads=config.threads)
    audit = {"kernel": kernel.kind, "lambda": config.ridge_lambda, "m": len(res),
             "psd_repair": None}
    try:
        sol = ridge_fit(K, res.eps, config.ridge_lambda, train_inputs=res.x)
    except NotPositiveDefinite:
        if config.indefinite_policy != "clip":
            raise
        K, lowest = clip_to_psd(K)
        log.info("clipped indefinite %s Gram matrix (min eigenvalue %.4g)", kernel.kind, lowest)
        audit["psd_repair"] = {"method": "eigenvalue_clip", "min_eigenvalue": lowest}
        sol = ridge_fit(K, res.eps, config.ridge_lambda, train_inputs=res.x)
    audit["jitter"] = sol.jitter
    if not config.correction:
        sol = RidgeSolution(np.zeros_like(sol.dual_weights), sol.lam, sol.train_inputs,
                            sol.jitter, sol.kernel_kind)
    return ResidualCorrector(kernel, sol), audit


@dataclass(eq=False)
class _Prepared:
    """A region split and normalised with statistics from ``stats_source``'s train."""

    train: RegionSeries
    validation: RegionSeries
    test: RegionSeries

    @property
    def warm_for_validation(self) -> RegionSeries:
        return self.train

    @property
    def warm_for_test(self) -> RegionSeries:
        return concat([self.train, self.validation])


def _raw_parts(series: RegionSeries, spec: SplitSpec, config: ExperimentConfig):
    present = [c for c in config.exclude_covariates if c in series.covariate_names]
    return split(series.drop_covariates(present), spec)


def _normalised(parts, stats) -> _Prepared:
    return _Prepared(*(apply_normalization(p, stats) for p in parts))


def _fit_models(data: _Prepared, config: ExperimentConfig) -> dict[str, Forecaster]:
    ar = fit_ar(data.train, config.ar_order)
    log.info("fitting gbt (%d trees)", config.gbt.n_trees)
    gbt = fit_gbt(data.train, config.gbt)
    log.info("fitting lstm (%d epochs)", config.lstm.epochs)
    lstm = fit_lstm(data.train, config.lstm)
    corrector, audit = fit_corrector(ar, data.validation, data.warm_for_validation, config)
    models = {"persistence": fit_persistence(data.train), "ar24": ar, "gbt": gbt, "lstm": lstm,
              "proposed": ProposedForecaster(ar, corrector)}
    return models, audit


# --------------------------------------------------------------------------
# In-domain benchmark
# --------------------------------------------------------------------------

@dataclass(eq=False)
class BenchmarkReport:
    rows: dict[str, MetricsRecord]
    fingerprint: dict
    corrector: dict = field(default_factory=dict)
    # test-window trajectories for plotting; not serialised
    forecasts: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    actual: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if tuple(self.rows) != MODEL_NAMES:
            raise ValueError(f"benchmark rows must be exactly {MODEL_NAMES}")
        if not self.fingerprint:
            raise ValueError("benchmark fingerprint missing")

    @property
    def best_model(self) -> str:
        return min(self.rows, key=lambda k: (self.rows[k].nrmse, MODEL_NAMES.index(k)))

    @property
    def best_classical(self) -> str:
        return min((k for k in self.rows if k != "proposed"), key=lambda k: self.rows[k].nrmse)

    @property
    def proposed_gap_pct(self) -> float:
        """Relative NRMSE gap of the proposed model to the best classical one, in percent."""
        ref = self.rows[self.best_classical].nrmse
        return 100.0 * (self.rows["proposed"].nrmse - ref) / ref if ref > 0 else 0.0

    def to_dict(self, include_latency: bool = True) -> dict:
        return {
            "kind": "benchmark",
            "fingerprint": self.fingerprint,
            "corrector": self.corrector,
            "rows": [{"model": k, **self.rows[k].to_dict(include_latency)} for k in self.rows],
            "summary": {"best_model": self.best_model, "best_classical": self.best_classical,
                        "best_nrmse": self.rows[self.best_model].nrmse,
                        "proposed_nrmse": self.rows["proposed"].nrmse,
                        "proposed_gap_pct": self.proposed_gap_pct},
        }

    @classmethod
    def from_dict(cls, d) -> "BenchmarkReport":
        rows = {r["model"]: MetricsRecord.from_dict(r) for r in d["rows"]}
        return cls(rows, d["fingerprint"])


def run_indomain(series: RegionSeries, spec: SplitSpec, config: ExperimentConfig = ExperimentConfig()) -> BenchmarkReport:
    parts = _raw_parts(series, spec, config)
    data = _normalised(parts, fit_covariate_stats(parts[0]))
    models, audit = _fit_models(data, config)
    warm = data.warm_for_test
    rows, forecasts = {}, {}
    for name in MODEL_NAMES:
        model = models[name]
        pred = rolling_forecast(model, data.test, warm)
        latency = measure_latency(model, data.test, warm)
        rows[name] = evaluate(data.test.y, pred, latency)
        forecasts[name] = pred
    fingerprint = {"region": series.region_id, "seed": config.seed,
                   "n_train": len(data.train), "n_validation": len(data.validation),
                   "n_test": len(data.test), "split": spec.to_dict()}
    return BenchmarkReport(rows, fingerprint, audit, forecasts, data.test.y.copy())


# --------------------------------------------------------------------------
# Cross-region transfer
# --------------------------------------------------------------------------

@dataclass(eq=False)
class TransferReport:
    regions: tuple[str, ...]
    pairs: list[dict]          # one entry per (source, target, model)
    averages: dict[str, dict[str, float]]

    @staticmethod
    def average(pairs: list[dict]) -> dict[str, dict[str, float]]:
        out = {}
        for name in MODEL_NAMES:
            cells = [p for p in pairs if p["model"] == name]
            out[name] = {mode: float(np.mean([c[mode] for c in cells])) for mode in TRANSFER_MODES}
        return out

    def check(self) -> float:
        """Largest deviation between stored averages and their recomputation."""
        again = self.average(self.pairs)
        return max(abs(again[m][k] - self.averages[m][k]) for m in again for k in TRANSFER_MODES)

    def to_dict(self) -> dict:
        return {"kind": "transfer", "regions": list(self.regions), "pairs": self.pairs,
                "averages": [{"model": m, **self.averages[m]} for m in MODEL_NAMES]}

    @classmethod
    def from_dict(cls, d) -> "TransferReport":
        avg = {r["model"]: {k: r[k] for k in TRANSFER_MODES} for r in d["averages"]}
        return cls(tuple(d["regions"]), list(d["pairs"]), avg)


def _nrmse_on(model, data: _Prepared) -> float:
    return evaluate(data.test.y, rolling_forecast(model, data.test, data.warm_for_test)).nrmse


def run_transfer(regions, splits, config: ExperimentConfig = ExperimentConfig()) -> TransferReport:
    """Train on each source, test on each target, for every ordered pair incl. self-pairs."""
    regions = list(regions)
    splits = list(splits)
    if len(regions) != len(splits):
        raise ValueError("one split per region required")
    raw = [_raw_parts(r, s, config) for r, s in zip(regions, splits)]
    stats = [fit_covariate_stats(parts[0]) for parts in raw]
    n = len(regions)
    # view[s][t]: target t normalised with source s statistics
    view = [[_normalised(raw[t], stats[s]) for t in range(n)] for s in range(n)]

    def fit_source(s):
        return _fit_models(view[s][s], config)[0]

    def pool_map(fn, items):
        if config.threads > 1:
            with ThreadPoolExecutor(max_workers=config.threads) as pool:
                return list(pool.map(fn, items))
        return [fn(i) for i in items]

    fitted = pool_map(fit_source, range(n))

    def cell(task):
        s, t = task
        target = view[s][t]
        src = fitted[s]
        own = fitted[t]
        sub = target.train[:config.fine_tune_hours]
        ar_ft = fit_ar(sub, config.ar_order)
        tuned = {
            "persistence": src["persistence"],
            "ar24": ar_ft,
            "gbt": fit_gbt(sub, config.gbt),
            "lstm": fine_tune_lstm(src["lstm"], sub, config.fine_tune_epochs),
            "proposed": ProposedForecaster(ar_ft, src["proposed"].corrector),
        }
        rows = []
        for name in MODEL_NAMES:
            rows.append({
                "source": regions[s].region_id, "target": regions[t].region_id, "model": name,
                "in_domain": _nrmse_on(own[name], view[t][t]),
                "zero_shot": _nrmse_on(src[name], target),
                "fine_tune": _nrmse_on(tuned[name], target),
            })
        return rows

    tasks = [(s, t) for s in range(n) for t in range(n)]
    pairs = [row for rows in pool_map(cell, tasks) for row in rows]
    return TransferReport(tuple(r.region_id for r in regions), pairs, TransferReport.average(pairs))


# --------------------------------------------------------------------------
# Regime separability
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SeparabilityConfig:
    per_class: int = 200
    window: int = 6
    label: str = REGIME_COVARIATE
    channel: str = "wind_speed"
    gamma_grid: tuple[float, ...] = RBF_GAMMA_GRID
    n_qubits: int = 6
    n_layers: int = 3
    alpha: float = 1.0
    ansatz_seed: int = 42
    seed: int = 11
    threads: int = 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gamma_grid"] = list(self.gamma_grid)
        return d


@dataclass(eq=False)
class SeparabilityReport:
    fdr_quantum: float
    fdr_rbf: float
    ratio: float
    counts: dict[str, int]
    kernels: dict
    embeddings: dict = field(default_factory=dict, repr=False)
    labels: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"kind": "separability", "fdr_quantum": self.fdr_quantum, "fdr_rbf": self.fdr_rbf,
                "ratio": self.ratio, "counts": self.counts, "kernels": self.kernels}

    @classmethod
    def from_dict(cls, d) -> "SeparabilityReport":
        return cls(d["fdr_quantum"], d["fdr_rbf"], d["ratio"], d["counts"], d["kernels"])


def regime_features(series: RegionSeries, window: int = 6, channel: str = "wind_speed"):
    """Trailing ``window`` hourly increments of the wind channel, pooled-standardised.

    Returns the feature matrix and the series row index each feature row ends at.
    """
    try:
        w = series.covariate(channel)
    except KeyError:
        raise MissingWindChannel(f"series has no {channel!r} covariate") from None
    inc = np.diff(w)
    n = len(inc) - window + 1
    if n < 1:
        raise ValueError("series too short for the feature window")
    idx = np.arange(window)[None, :] + np.arange(n)[:, None]
    F = inc[idx]
    scale = inc.std()
    F = F / scale if scale > 0 else F
    return F, np.arange(window, len(w))


def _sample(labels: np.ndarray, per_class: int, rng: np.random.Generator, exclude=None):
    picked = []
    for cls in (0.0, 1.0):
        pool = np.flatnonzero(labels == cls)
        if exclude is not None:
            pool = np.setdiff1d(pool, exclude)
        take = min(per_class, len(pool))
        picked.append(np.sort(rng.choice(pool, size=take, replace=False)))
    return picked


def _fdr(K, labels) -> tuple[float, np.ndarray]:
    emb = kernel_pca(K, min(2, len(labels)))
    return fisher_ratio(emb.projections[:, 0], labels), emb.projections


def run_separability(series: RegionSeries, config: SeparabilityConfig = SeparabilityConfig()) -> SeparabilityReport:
    if config.label not in series.covariate_names:
        raise MissingClass(f"series has no {config.label!r} regime covariate")
    F, rows = regime_features(series, config.window, config.channel)
    labels = series.covariate(config.label)[rows]
    if not np.all(np.isin(labels, (0.0, 1.0))):
        raise ValueError("regime labels must be 0/1")
    rng = np.random.default_rng([config.seed, 7])
    calm, stormy = _sample(labels, config.per_class, rng)
    if min(len(calm), len(stormy)) < 20:
        raise MissingClass(f"need >= 20 samples per regime, got {len(calm)} calm / "
                           f"{len(stormy)} stormy")
    main = np.concatenate([calm, stormy])
    tune_calm, tune_stormy = _sample(labels, config.per_class, rng, exclude=main)
    tune = np.concatenate([tune_calm, tune_stormy])
    if min(len(tune_calm), len(tune_stormy)) < 20:
        tune = main

    scores = []
    for gamma in config.gamma_grid:
        K = gram_matrix(F[tune], RbfKernel(gamma), threads=config.threads)
        scores.append(_fdr(K, labels[tune])[0])
    best_gamma = float(config.gamma_grid[int(np.argmax(scores))])

    X, y = F[main], labels[main]
    fdr_rbf, emb_rbf = _fdr(gram_matrix(X, RbfKernel(best_gamma), threads=config.threads), y)
    spec = xavier_init(config.n_qubits, config.n_layers, config.ansatz_seed, config.alpha)
    fdr_q, emb_q = _fdr(gram_matrix(X, ExactKernel(spec), threads=config.threads), y)
    kernels = {
        "rbf": {"gamma": best_gamma, "gamma_grid": list(config.gamma_grid),
                "tuning_fdr": [float(s) for s in scores]},
        "quantum": {"kind": "exact", "ansatz": spec.to_dict(), "ansatz_seed": config.ansatz_seed},
        "features": {"channel": config.channel, "window": config.window, "seed": config.seed},
    }
    return SeparabilityReport(fdr_q, fdr_rbf, fdr_q / fdr_rbf,
                              {"calm": int(len(calm)), "stormy": int(len(stormy))}, kernels,
                              {"rbf": emb_rbf, "quantum": emb_q}, y)


def label_regimes(series: RegionSeries, window: int, threshold: float,
                  channel: str = "wind_speed", name: str = "regime_label") -> RegionSeries:
    """Stormy (1) where the trailing rolling std of the wind channel exceeds ``threshold``.

    Early rows use the shorter history available; a single sample has zero
    variability and is labelled calm.
    """
    if window < 2:
        raise ValueError("window must be >= 2")
    try:
        w = series.covariate(channel)
    except KeyError:
        raise MissingWindChannel(f"series has no {channel!r} covariate") from None
    std = np.empty(len(w))
    for i in range(len(w)):
        std[i] = w[max(0, i - window + 1):i + 1].std()
    return series.with_covariate(name, (std > threshold).astype(float))
