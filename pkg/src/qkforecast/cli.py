"""Command-line entry point: ``qkforecast <command> [--config PATH] [--seed N] [--out DIR] [--threads N]``.

Exit status is 0 on success, 1 for usage or configuration problems and 2 for
runtime or data errors. Every command computes all of its outputs before it
writes any file, so a failed run leaves no partial artifacts behind.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import __version__
from .analysis import permutation_attribution
from .baselines import GbtConfig, LstmConfig, fit_ar, fit_gbt, gbt_feature_names, gbt_features
from .baselines.ar import lag_matrix
from .errors import ConfigError, QKForecastError
from .experiments import (
    MODEL_NAMES,
    BenchmarkReport,
    ExperimentConfig,
    SeparabilityConfig,
    SeparabilityReport,
    TransferReport,
    _normalised,
    _raw_parts,
    label_regimes,
    run_indomain,
    run_separability,
    run_transfer,
)
from .report import canonical_json, line_svg, render_explanation, render_table, scatter_svg
from .synthgen import GenConfig, generate
from .timeseries import (
    CsvSchema,
    RegionSeries,
    SplitSpec,
    atomic_write_text,
    fit_covariate_stats,
    harmonize_hourly,
    ingest_csv,
    series_to_csv,
)
from .vqkernel import RBF_GAMMA_GRID, AnsatzSpec, ExactKernel, gram_matrix, kernel_exact, xavier_init

log = logging.getLogger("qkforecast")

SCHEMA_VERSION = 1
COMMANDS = ("generate", "benchmark", "transfer", "separability", "attribute", "kernel-check", "report")


# --------------------------------------------------------------------------
# Run configuration
# --------------------------------------------------------------------------

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class GeneratorRegion(_Strict):
    """Synthetic region; its seed is the run seed plus ``seed_offset`` unless ``seed`` is set."""

    id: str | None = None
    kind: Literal["solar", "wind", "mixed"]
    hours: int | None = Field(None, ge=48)
    seed_offset: int = 0
    seed: int | None = None


class FileRegion(_Strict):
    """CSV region; relative paths resolve against the config file's directory."""

    id: str | None = None
    path: str
    csv_schema: dict = Field(default_factory=dict, alias="schema")

    @model_validator(mode="after")
    def _schema_ok(self):
        CsvSchema.from_mapping(self.csv_schema)
        return self


Region = Union[GeneratorRegion, FileRegion]


class SplitConfig(_Strict):
    """Consecutive train / validation / test hour counts from ``start`` hours into each region."""

    start: int = Field(0, ge=0)
    train: int = Field(2000, ge=1)
    validation: int = Field(168, ge=1)
    test: int = Field(336, ge=1)

    @property
    def total(self) -> int:
        return self.start + self.train + self.validation + self.test


class GbtSection(_Strict):
    n_trees: int = Field(200, ge=1)
    max_depth: int = Field(4, ge=1)
    learning_rate: float = Field(0.1, gt=0)
    min_samples_leaf: int = Field(5, ge=1)
    n_lags: int = Field(24, ge=1)
    reg_lambda: float = Field(0.0, ge=0)


class LstmSection(_Strict):
    hidden: int = Field(32, ge=1)
    layers: int = Field(2, ge=1)
    lookback: int = Field(24, ge=1)
    epochs: int = Field(30, ge=0)
    batch_size: int = Field(64, ge=1)
    learning_rate: float = Field(1e-3, gt=0)
    seed: int = 0


class ModelsSection(_Strict):
    ar_order: int = Field(24, ge=1)
    gbt: GbtSection = GbtSection()
    lstm: LstmSection = LstmSection()


class KernelSection(_Strict):
    kind: Literal["surrogate", "exact"] = "surrogate"
    n_qubits: int = Field(6, ge=1, le=14)
    n_layers: int = Field(3, ge=1)
    alpha: float = 1.0
    ansatz_seed: int = 42
    ridge_lambda: float = Field(5.0, gt=0, alias="lambda")
    correction: bool = True
    indefinite_policy: Literal["error", "clip"] = "error"


class TransferSection(_Strict):
    fine_tune_hours: int = Field(720, ge=2)
    fine_tune_epochs: int = Field(5, ge=0)


class LabelerSection(_Strict):
    window: int = Field(24, ge=2)
    threshold: float = Field(1.6, ge=0)


class SeparabilitySection(_Strict):
    region: Region = GeneratorRegion(id="regimes", kind="mixed", hours=3000, seed=11)
    label: str = "regime"
    # set to derive labels from wind variability when the data has none
    labeler: LabelerSection | None = None
    per_class: int = Field(200, ge=20)
    window: int = Field(6, ge=1)
    gamma_grid: tuple[float, ...] = RBF_GAMMA_GRID
    seed: int = 11

    @model_validator(mode="after")
    def _gammas(self):
        if not self.gamma_grid or min(self.gamma_grid) <= 0:
            raise ValueError("gamma_grid must be non-empty and positive")
        return self


class AttributionSection(_Strict):
    model: Literal["gbt", "ar24"] = "gbt"
    repetitions: int = Field(5, ge=1)
    seed: int = 0


def _default_regions():
    return [GeneratorRegion(id="mixed", kind="mixed"),
            GeneratorRegion(id="solar", kind="solar", seed_offset=1),
            GeneratorRegion(id="wind", kind="wind", seed_offset=2)]


class RunConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    seed: int = 7
    threads: int = Field(1, ge=1)
    out: str = "qkforecast-out"
    regions: list[Region] = Field(default_factory=_default_regions, min_length=1)
    benchmark_region: str | None = None
    split: SplitConfig = SplitConfig()
    models: ModelsSection = ModelsSection()
    kernel: KernelSection = KernelSection()
    transfer: TransferSection = TransferSection()
    separability: SeparabilitySection = SeparabilitySection()
    attribution: AttributionSection = AttributionSection()

    @model_validator(mode="after")
    def _ids(self):
        ids = region_ids(self.regions)
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate region ids: {ids}")
        if self.benchmark_region is not None and self.benchmark_region not in ids:
            raise ValueError(f"benchmark_region {self.benchmark_region!r} is not one of {ids}")
        return self

    def experiment(self) -> ExperimentConfig:
        m, k = self.models, self.kernel
        return ExperimentConfig(
            ar_order=m.ar_order, gbt=GbtConfig(**m.gbt.model_dump()),
            lstm=LstmConfig(**m.lstm.model_dump()), kernel_kind=k.kind,
            ridge_lambda=k.ridge_lambda, n_qubits=k.n_qubits, n_layers=k.n_layers,
            alpha=k.alpha, ansatz_seed=k.ansatz_seed, correction=k.correction,
            indefinite_policy=k.indefinite_policy,
            fine_tune_hours=self.transfer.fine_tune_hours,
            fine_tune_epochs=self.transfer.fine_tune_epochs, threads=self.threads, seed=self.seed)

    def separability_config(self) -> SeparabilityConfig:
        s, k = self.separability, self.kernel
        return SeparabilityConfig(per_class=s.per_class, window=s.window, label=s.label,
                                  gamma_grid=tuple(s.gamma_grid), n_qubits=k.n_qubits,
                                  n_layers=k.n_layers, alpha=k.alpha, ansatz_seed=k.ansatz_seed,
                                  seed=s.seed, threads=self.threads)


def region_ids(regions) -> list[str]:
    out = []
    for i, r in enumerate(regions):
        if r.id:
            out.append(r.id)
        elif isinstance(r, GeneratorRegion):
            out.append(f"{r.kind}-{i}")
        else:
            out.append(Path(r.path).stem)
    return out


def _format_validation(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def load_config(path: str | None = None, overrides: dict | None = None) -> tuple[RunConfig, Path]:
    """Parse and validate a run configuration, applying command-line overrides.

    Returns the config and the directory relative region paths resolve against.
    """
    doc, base = {}, Path.cwd()
    if path is not None:
        p = Path(path)
        try:
            doc = json.loads(p.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {p}") from None
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        if "schema_version" not in doc:
            raise ConfigError("config is missing schema_version")
        base = p.resolve().parent
    doc.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        cfg = RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(f"invalid config: {_format_validation(exc)}") from None
    return cfg, base


def config_to_dict(cfg: RunConfig) -> dict:
    return cfg.model_dump(mode="json", by_alias=True)


# --------------------------------------------------------------------------
# Data loading
# --------------------------------------------------------------------------

def load_region(spec: Region, rid: str, cfg: RunConfig, base: Path) -> tuple[RegionSeries, dict]:
    """Series for one region spec plus a JSON-able description of where it came from."""
    if isinstance(spec, GeneratorRegion):
        seed = spec.seed if spec.seed is not None else cfg.seed + spec.seed_offset
        hours = spec.hours or cfg.split.total
        series = generate(GenConfig(seed, hours, spec.kind, rid))
        return series, {"generator": spec.kind, "seed": seed, "hours": hours}
    path = Path(spec.path)
    if not path.is_absolute():
        path = base / path
    series = ingest_csv(path, CsvSchema.from_mapping(spec.csv_schema), region_id=rid)
    if not series.is_hourly:
        series = harmonize_hourly(series)
    return series, {"file": spec.path}


def load_regions(cfg: RunConfig, base: Path):
    ids = region_ids(cfg.regions)
    return [load_region(r, rid, cfg, base) for r, rid in zip(cfg.regions, ids)]


def split_for(series: RegionSeries, cfg: RunConfig) -> SplitSpec:
    s = cfg.split
    return SplitSpec.from_counts(int(series.hours[0]) + s.start, s.train, s.validation, s.test)


def _benchmark_index(cfg: RunConfig) -> int:
    ids = region_ids(cfg.regions)
    return ids.index(cfg.benchmark_region) if cfg.benchmark_region else 0


def _write_all(out: Path, files: dict[str, str]) -> list[Path]:
    written = []
    for name, text in files.items():
        atomic_write_text(out / name, text)
        written.append(out / name)
    return written


# --------------------------------------------------------------------------
# Commands; each returns {file name: text}
# --------------------------------------------------------------------------

def cmd_generate(cfg: RunConfig, base: Path) -> dict[str, str]:
    """Write each configured region series as CSV."""
    files = {}
    for (series, _), rid in zip(load_regions(cfg, base), region_ids(cfg.regions)):
        files[f"{rid}.csv"] = series_to_csv(series)
    return files


def _separability(cfg: RunConfig, base: Path) -> SeparabilityReport:
    series, source = load_region(cfg.separability.region, "regimes", cfg, base)
    lab = cfg.separability.labeler
    if lab is not None:
        series = label_regimes(series, lab.window, lab.threshold, name=cfg.separability.label)
    rep = run_separability(series, cfg.separability_config())
    rep.kernels["source"] = source
    return rep


def _benchmark(cfg: RunConfig, base: Path) -> BenchmarkReport:
    i = _benchmark_index(cfg)
    series, source = load_region(cfg.regions[i], region_ids(cfg.regions)[i], cfg, base)
    rep = run_indomain(series, split_for(series, cfg), cfg.experiment())
    rep.fingerprint["source"] = source
    return rep


def latency_sidecar(rep: BenchmarkReport) -> str:
    return canonical_json({"latency_ms": {m: rep.rows[m].latency_ms for m in MODEL_NAMES}}) + "\n"


def cmd_benchmark(cfg: RunConfig, base: Path) -> dict[str, str]:
    """In-domain benchmark of all models plus the separability pair and explanation."""
    rep = _benchmark(cfg, base)
    sep = _separability(cfg, base)
    curves = {"actual": rep.actual, **{m: rep.forecasts[m] for m in MODEL_NAMES}}
    return {
        "benchmark.json": render_table(rep, "json", include_latency=False),
        "benchmark.md": render_table(rep, "markdown"),
        "benchmark.csv": render_table(rep, "csv", include_latency=False),
        "latency.json": latency_sidecar(rep),
        "separability.json": render_table(sep, "json"),
        "explanation.txt": render_explanation(rep, sep),
        "forecast.svg": line_svg(curves, f"{rep.fingerprint['region']}: test window"),
    }


def cmd_transfer(cfg: RunConfig, base: Path) -> dict[str, str]:
    """Cross-region transfer over all ordered pairs of the three regions."""
    if len(cfg.regions) != 3:
        raise ConfigError(f"transfer needs exactly three regions, config has {len(cfg.regions)}")
    series = [s for s, _ in load_regions(cfg, base)]
    rep = run_transfer(series, [split_for(s, cfg) for s in series], cfg.experiment())
    return {"transfer.json": render_table(rep, "json"),
            "transfer.md": render_table(rep, "markdown"),
            "transfer.csv": render_table(rep, "csv")}


def cmd_separability(cfg: RunConfig, base: Path) -> dict[str, str]:
    """Kernel-PCA regime separability, quantum-inspired kernel against RBF."""
    rep = _separability(cfg, base)
    return {"separability.json": render_table(rep, "json"),
            "separability.md": render_table(rep, "markdown"),
            "embedding_quantum.svg": scatter_svg(rep.embeddings["quantum"], rep.labels,
                                                 "fidelity kernel embedding"),
            "embedding_rbf.svg": scatter_svg(rep.embeddings["rbf"], rep.labels,
                                             "RBF kernel embedding")}


def cmd_attribute(cfg: RunConfig, base: Path) -> dict[str, str]:
    """Permutation importance of the chosen model's inputs over the test window."""
    i = _benchmark_index(cfg)
    series, _ = load_region(cfg.regions[i], region_ids(cfg.regions)[i], cfg, base)
    exp = cfg.experiment()
    parts = _raw_parts(series, split_for(series, cfg), exp)
    data = _normalised(parts, fit_covariate_stats(parts[0]))
    window = data.warm_for_test
    y = np.concatenate([window.y, data.test.y])
    x = np.vstack([window.x, data.test.x])
    n_test = len(data.test)
    if cfg.attribution.model == "gbt":
        model = fit_gbt(data.train, exp.gbt)
        X, target = gbt_features(y, x, exp.gbt.n_lags)
        names = gbt_feature_names(data.train.covariate_names, exp.gbt.n_lags)

        def predict(Z):
            return np.clip(model.predict_features(Z), 0.0, 1.0)
    else:
        model = fit_ar(data.train, exp.ar_order)
        X, target = lag_matrix(y, exp.ar_order), y[exp.ar_order:]
        names = [f"lag_{k}" for k in range(1, exp.ar_order + 1)]

        def predict(Z):
            return np.clip(model.intercept + Z @ model.coeffs, 0.0, 1.0)
    X, target = X[-n_test:], target[-n_test:]
    a = cfg.attribution
    vec = permutation_attribution(predict, X, target, a.repetitions, a.seed, names, cfg.threads)
    doc = {"kind": "attribution", "model": a.model, "region": series.region_id, **vec.to_dict()}
    return {"attribution.json": canonical_json(doc) + "\n",
            "attribution.md": render_table(vec, "markdown")}


def kernel_checks(cfg: RunConfig) -> dict:
    """Unit diagonal, symmetry and PSD of the fidelity kernel, plus a one-qubit closed form."""
    k = cfg.kernel
    spec = xavier_init(k.n_qubits, k.n_layers, k.ansatz_seed, k.alpha)
    rng = np.random.default_rng([cfg.seed, 3])
    X = rng.uniform(0.0, 2 * np.pi, size=(50, k.n_qubits))
    diag = max(abs(kernel_exact(x, x, spec) - 1.0) for x in X)
    sym = max(abs(kernel_exact(X[i], X[j], spec) - kernel_exact(X[j], X[i], spec))
              for i in range(len(X)) for j in range(i + 1, len(X)))
    min_eig = gram_matrix(X[:40], ExactKernel(spec), threads=cfg.threads).min_eigenvalue()
    one = AnsatzSpec.zeros(1, 1, 1.0)
    grid = np.linspace(0.0, 2 * np.pi, 10, endpoint=False)
    analytic = max(abs(kernel_exact([a], [b], one) - np.cos((a - b) / 2) ** 2)
                   for a in grid for b in grid)
    checks = {
        "unit_diagonal": {"max_error": diag, "tolerance": 1e-10, "passed": bool(diag <= 1e-10)},
        "symmetry": {"max_error": sym, "tolerance": 1e-12, "passed": bool(sym < 1e-12)},
        "psd": {"min_eigenvalue": min_eig, "tolerance": -1e-8, "passed": bool(min_eig >= -1e-8)},
        "single_qubit": {"max_error": analytic, "tolerance": 1e-10, "passed": bool(analytic <= 1e-10)},
    }
    return {"kind": "kernel_check", "n_qubits": k.n_qubits, "n_layers": k.n_layers,
            "ansatz_seed": k.ansatz_seed, "checks": checks,
            "passed": all(c["passed"] for c in checks.values())}


def cmd_kernel_check(cfg: RunConfig, base: Path) -> dict[str, str]:
    """Validate the fidelity kernel: unit diagonal, symmetry, PSD, one-qubit closed form."""
    doc = kernel_checks(cfg)
    lines = [f"{name}: {'pass' if c['passed'] else 'FAIL'}" for name, c in doc["checks"].items()]
    return {"kernel_check.json": canonical_json(doc) + "\n", "kernel_check.txt": "\n".join(lines) + "\n"}


def cmd_report(cfg: RunConfig, base: Path) -> dict[str, str]:
    """Re-render text artifacts from JSON reports already present in the output directory."""
    out = Path(cfg.out)
    try:
        bench_doc = json.loads((out / "benchmark.json").read_text(encoding="utf-8"))
        sep = SeparabilityReport.from_dict(
            json.loads((out / "separability.json").read_text(encoding="utf-8")))
    except FileNotFoundError as exc:
        raise QKForecastError(f"report needs benchmark output first: {exc.filename} missing") from None
    lat_path = out / "latency.json"
    if lat_path.exists():
        lat = json.loads(lat_path.read_text(encoding="utf-8"))["latency_ms"]
        for r in bench_doc["rows"]:
            r["latency_ms"] = lat.get(r["model"], 0.0)
    bench = BenchmarkReport.from_dict(bench_doc)
    files = {"explanation.txt": render_explanation(bench, sep),
             "benchmark.md": render_table(bench, "markdown", include_latency=lat_path.exists())}
    if (out / "transfer.json").exists():
        tr = TransferReport.from_dict(json.loads((out / "transfer.json").read_text(encoding="utf-8")))
        files["transfer.md"] = render_table(tr, "markdown")
    return files


HANDLERS = {
    "generate": cmd_generate,
    "benchmark": cmd_benchmark,
    "transfer": cmd_transfer,
    "separability": cmd_separability,
    "attribute": cmd_attribute,
    "kernel-check": cmd_kernel_check,
    "report": cmd_report,
}


# --------------------------------------------------------------------------
# argparse
# --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--out", metavar="DIR", help="override the output directory")
    common.add_argument("--threads", type=int, help="worker threads (output does not depend on it)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    p = _Parser(prog="qkforecast", description="Kernel-corrected renewable forecasting runs.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        doc = (HANDLERS[name].__doc__ or "").strip().splitlines()
        sub.add_parser(name, parents=[common], help=doc[0] if doc else None)
    return p


def _qualified(exc: BaseException) -> str:
    return f"{type(exc).__module__}.{type(exc).__name__}: {exc}"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"qkforecast: usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg, base = load_config(args.config, {"seed": args.seed, "out": args.out,
                                              "threads": args.threads})
        files = HANDLERS[args.command](cfg, base)
        written = _write_all(Path(cfg.out), files)
    except ConfigError as exc:
        print(f"qkforecast: config error: {_qualified(exc)}", file=sys.stderr)
        return 1
    except (QKForecastError, OSError, ValueError, ArithmeticError) as exc:
        print(f"qkforecast: error: {_qualified(exc)}", file=sys.stderr)
        return 2
    except Exception as exc:  # a bug, not bad input; keep the traceback under -v
        log.debug("unexpected failure", exc_info=True)
        print(f"qkforecast: internal error: {_qualified(exc)}", file=sys.stderr)
        return 2
    for path in written:
        log.info("wrote %s", path)
    if args.command == "kernel-check":
        print(files["kernel_check.txt"], end="")
        if not json.loads(files["kernel_check.json"])["passed"]:
            return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
