"""Seeded Monte Carlo sweeps over SNR, sensor count, stopping threshold and classifier."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .channel import FadingModel, noise_power_for_snr, sample_channel, synthesize
from .classifier import ALRT, EM_HML, METHODS, MOM_HLRT, classify_alrt, classify_em_hml, classify_mom
from .constellation import DEFAULT_FORMATS, build_constellation
from .em import EmOptions
from .errors import ConfigurationError, InputError, NumericError
from .rng import stream

log = logging.getLogger(__name__)

CSV_HEADER = ("snr_db", "L", "delta", "classifier", "trials", "pc", "ci95", "mean_iterations")
THREADS_ENV = "MODEMFUSE_THREADS"
MAX_FAILURE_RATE = 0.01


class ExperimentFailure(NumericError):
    """Raised when a cell exceeds the tolerated share of numerically failed trials."""

    def __init__(self, message, results=None):
        super().__init__(message)
        self.results = results or []


@dataclass
class ExperimentConfig:
    snr_db_list: list = field(default_factory=lambda: [0.0, 5.0])
    sensor_counts: list = field(default_factory=lambda: [1, 2, 4])
    block_length: int = 500
    trials: int = 1000
    stop_deltas: list = field(default_factory=lambda: [1e-4])
    candidate_formats: list = field(default_factory=lambda: list(DEFAULT_FORMATS))
    classifiers: list = field(default_factory=lambda: [EM_HML])
    master_seed: int = 0
    average_power: float = 1.0
    grid_refine: str = "estimated"
    grid_refine_snr_threshold_db: float = 10.0
    grid_points: int = 16
    max_iterations: int = 500
    noise_fusion: str = "mean"
    truth_assignment: str = "uniform"
    output_path: Optional[str] = None

    def __post_init__(self):
        for name in ("snr_db_list", "sensor_counts", "stop_deltas", "candidate_formats", "classifiers"):
            value = getattr(self, name)
            if isinstance(value, (str, int, float)):
                value = [value]
            value = list(value)
            if not value:
                raise ConfigurationError(f"{name} must not be empty")
            setattr(self, name, value)
        self.snr_db_list = [float(v) for v in self.snr_db_list]
        self.stop_deltas = [float(v) for v in self.stop_deltas]
        self.sensor_counts = [int(v) for v in self.sensor_counts]
        self.candidate_formats = [build_constellation(f).format_id for f in self.candidate_formats]
        self.classifiers = [str(c).upper() for c in self.classifiers]
        if any(c not in METHODS for c in self.classifiers):
            raise ConfigurationError(f"classifiers must be drawn from {METHODS}, got {self.classifiers}")
        if len(set(self.candidate_formats)) != len(self.candidate_formats) or len(self.candidate_formats) < 2:
            raise ConfigurationError("need at least two distinct candidate formats")
        if any(L < 1 for L in self.sensor_counts):
            raise ConfigurationError("sensor counts must be positive")
        if any(not d > 0 for d in self.stop_deltas):
            raise ConfigurationError("stop deltas must be positive")
        if self.trials < 1 or self.block_length < 1:
            raise ConfigurationError("trials and block_length must be at least 1")
        if not self.average_power > 0:
            raise ConfigurationError("average_power must be positive")
        if self.truth_assignment not in ("uniform", "cycle"):
            raise ConfigurationError("truth_assignment must be 'uniform' or 'cycle'")
        # Fail early on bad EM settings.
        self.em_options(self.stop_deltas[0])

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> ExperimentConfig:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise InputError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def em_options(self, delta: float) -> EmOptions:
        return EmOptions(stop_delta=delta, max_iterations=self.max_iterations, grid_refine=self.grid_refine,
                         grid_refine_snr_threshold_db=self.grid_refine_snr_threshold_db,
                         grid_points=self.grid_points, noise_fusion=self.noise_fusion)


@dataclass(frozen=True)
class TrialRecord:
    snr_db: float
    L: int
    delta: float
    classifier: str
    truth: int
    decision: int
    iterations: int
    failed: bool = False

    @property
    def key(self):
        return (self.snr_db, self.L, self.delta, self.classifier)


@dataclass
class AggregateResult:
    snr_db: float
    L: int
    delta: float
    classifier: str
    pc: float
    pc_ci95: float
    confusion: list
    mean_iterations: float
    trials_completed: int
    failures: int = 0
    labels: list = field(default_factory=list)

    @property
    def key(self):
        return (self.snr_db, self.L, self.delta, self.classifier)


def aggregate(records: Sequence[TrialRecord], labels: Sequence[str] | None = None) -> AggregateResult:
    """Tally trial records of a single cell into Pc, a 95% CI and a confusion matrix."""
    records = list(records)
    if not records:
        raise ConfigurationError("cannot aggregate an empty record list")
    keys = {rec.key for rec in records}
    if len(keys) != 1:
        raise ConfigurationError(f"records span {len(keys)} cells; aggregate one cell at a time")
    size = len(labels) if labels else 1 + max(max(r.truth, r.decision) for r in records)
    confusion = np.zeros((size, size), dtype=int)
    done = [r for r in records if not r.failed]
    for rec in done:
        confusion[rec.truth, rec.decision] += 1
    completed = len(done)
    pc = float(np.trace(confusion)) / completed if completed else 0.0
    ci95 = 1.96 * math.sqrt(pc * (1 - pc) / completed) if completed else 0.0
    mean_iter = float(np.mean([r.iterations for r in done])) if done else 0.0
    snr_db, L, delta, classifier = records[0].key
    return AggregateResult(snr_db, L, delta, classifier, pc, ci95, confusion.tolist(), mean_iter, completed,
                           len(records) - completed, list(labels or []))


def _truth_index(config: ExperimentConfig, snr_db: float, L: int, trial: int) -> int:
    size = len(config.candidate_formats)
    if config.truth_assignment == "cycle":
        return trial % size
    return int(stream(config.master_seed, snr_db, L, trial, purpose="truth").integers(size))


def run_unit(config: ExperimentConfig, snr_db: float, L: int, trial: int) -> list[TrialRecord]:
    """One Monte Carlo draw scored by every requested classifier and stop delta."""
    specs = [build_constellation(f) for f in config.candidate_formats]
    truth = _truth_index(config, snr_db, L, trial)
    fading = FadingModel.from_average_power(config.average_power)
    noise = noise_power_for_snr(snr_db, config.average_power)
    channel = sample_channel(stream(config.master_seed, snr_db, L, trial, purpose="channel"), L, fading, noise)
    block, _ = synthesize(stream(config.master_seed, snr_db, L, trial, purpose="data"), specs[truth], channel,
                          config.block_length)
    records = []
    for method in config.classifiers:
        if method == EM_HML:
            for delta in config.stop_deltas:
                try:
                    result = classify_em_hml(block, specs, config.em_options(delta), true_snr_db=snr_db)
                    records.append(TrialRecord(snr_db, L, delta, method, truth, result.decision_index,
                                               result.decision_em.iterations))
                except NumericError as exc:
                    log.warning("trial %d at %.1f dB, L=%d failed: %s", trial, snr_db, L, exc)
                    records.append(TrialRecord(snr_db, L, delta, method, truth, -1, 0, failed=True))
            continue
        try:
            if method == ALRT:
                decision = classify_alrt(block, specs, channel).decision_index
            else:
                decision = classify_mom(block, specs, config.em_options(config.stop_deltas[0])).decision_index
            failed = False
        except NumericError as exc:
            log.warning("trial %d at %.1f dB, L=%d failed: %s", trial, snr_db, L, exc)
            decision, failed = -1, True
        # Parameter-free classifiers do not depend on delta; reuse the decision in every delta cell.
        for delta in config.stop_deltas:
            records.append(TrialRecord(snr_db, L, delta, method, truth, decision, 0, failed))
    return records


def _run_units(args):
    config, units = args
    return [rec for snr_db, L, trial in units for rec in run_unit(config, snr_db, L, trial)]


def resolve_threads(requested: int | None = None) -> int:
    """Worker count: explicit request, else the env cap, else the CPU count."""
    available = os.cpu_count() or 1
    if requested is not None:
        if requested < 1:
            raise ConfigurationError("thread count must be at least 1")
        return int(requested)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            cap = int(env)
        except ValueError as exc:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
        if cap < 1:
            raise ConfigurationError(f"{THREADS_ENV} must be at least 1")
        return min(cap, available)
    return available


def run_experiment(config: ExperimentConfig, threads: int | None = None,
                   progress: bool = False) -> list[AggregateResult]:
    """Run the full sweep and aggregate one result per (snr, L, delta, classifier) cell.

    Output depends only on ``config``; the worker count changes the schedule,
    never the numbers.

    Raises:
        ExperimentFailure: if any cell loses more than 1% of its trials to
            numeric failures. The partial results ride on the exception.
    """
    workers = resolve_threads(threads)
    units = [(snr, L, t) for snr in config.snr_db_list for L in config.sensor_counts for t in range(config.trials)]
    batch = max(1, min(25, len(units) // (4 * workers) or 1))
    batches = [units[i:i + batch] for i in range(0, len(units), batch)]
    records: list[TrialRecord] = []
    if workers == 1:
        iterator: Iterable = map(_run_units, ((config, b) for b in batches))
        for done, chunk in enumerate(iterator, 1):
            records.extend(chunk)
            if progress:
                log.info("batch %d/%d", done, len(batches))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for done, chunk in enumerate(pool.map(_run_units, [(config, b) for b in batches]), 1):
                records.extend(chunk)
                if progress:
                    log.info("batch %d/%d", done, len(batches))

    by_cell: dict = {}
    for rec in records:
        by_cell.setdefault(rec.key, []).append(rec)
    results = []
    for snr in config.snr_db_list:
        for L in config.sensor_counts:
            for delta in config.stop_deltas:
                for method in config.classifiers:
                    cell = by_cell[(snr, L, delta, method)]
                    results.append(aggregate(cell, config.candidate_formats))
    bad = [r for r in results if r.failures > MAX_FAILURE_RATE * (r.failures + r.trials_completed)]
    if bad:
        worst = bad[0]
        raise ExperimentFailure(
            f"{len(bad)} cell(s) exceeded the failure threshold, e.g. {worst.classifier} at "
            f"{worst.snr_db} dB, L={worst.L}, delta={worst.delta}: {worst.failures} failures", results)
    return results


def _fmt(value: float) -> str:
    return repr(float(value))


def results_to_csv(results: Sequence[AggregateResult]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in results:
        writer.writerow((_fmt(r.snr_db), r.L, _fmt(r.delta), r.classifier, r.trials_completed,
                         _fmt(r.pc), _fmt(r.pc_ci95), _fmt(r.mean_iterations)))
    return buffer.getvalue()


def results_to_json(results: Sequence[AggregateResult]) -> str:
    return json.dumps([asdict(r) for r in results], indent=2, sort_keys=True) + "\n"


def write_results(results: Sequence[AggregateResult], path, fmt: str = "csv") -> list[Path]:
    """Write results as CSV, JSON or both.

    For ``fmt="both"`` the JSON goes next to ``path`` with a ``.json`` suffix.

    Returns:
        The paths written.
    """
    path = Path(path)
    outputs = []
    if fmt not in ("csv", "json", "both"):
        raise ConfigurationError(f"unknown results format {fmt!r}")
    try:
        if fmt in ("csv", "both"):
            path.write_text(results_to_csv(results))
            outputs.append(path)
        if fmt in ("json", "both"):
            target = path if fmt == "json" else path.with_suffix(".json")
            target.write_text(results_to_json(results))
            outputs.append(target)
    except OSError as exc:
        raise InputError(f"cannot write results to {path}: {exc}") from exc
    return outputs


def read_results(path) -> list[AggregateResult]:
    """Load results written by :func:`write_results` (JSON or CSV)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read results {path}: {exc}") from exc
    if text.lstrip().startswith("["):
        try:
            return [AggregateResult(**item) for item in json.loads(text)]
        except (TypeError, json.JSONDecodeError) as exc:
            raise InputError(f"{path}: malformed results JSON: {exc}") from exc
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise InputError(f"{path}: unexpected results header {reader.fieldnames}")
    results = []
    for row in reader:
        try:
            results.append(AggregateResult(float(row["snr_db"]), int(row["L"]), float(row["delta"]),
                                           row["classifier"], float(row["pc"]), float(row["ci95"]), [],
                                           float(row["mean_iterations"]), int(row["trials"])))
        except (KeyError, ValueError) as exc:
            raise InputError(f"{path}: malformed results row {row}: {exc}") from exc
    return results


def plot_series(results: Sequence[AggregateResult]) -> str:
    """Pc-vs-SNR series, one block per (classifier, L, delta), as CSV text."""
    series: dict = {}
    for r in results:
        series.setdefault((r.classifier, r.L, r.delta), []).append((r.snr_db, r.pc, r.pc_ci95))
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(("classifier", "L", "delta", "snr_db", "pc", "ci95"))
    for (classifier, L, delta) in sorted(series):
        for snr, pc, ci in sorted(series[(classifier, L, delta)]):
            writer.writerow((classifier, L, _fmt(delta), _fmt(snr), _fmt(pc), _fmt(ci)))
    return buffer.getvalue()
