"""Modulation decisions over a candidate set: EM-HML, clairvoyant ALRT and MoM-only."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .channel import as_samples
from .constellation import ConstellationSpec
from .em import EmOptions, EmResult, initialize, log_likelihood, run_em
from .errors import ConfigurationError, NumericError

EM_HML = "EM_HML"
ALRT = "ALRT"
MOM_HLRT = "MOM_HLRT"
METHODS = (EM_HML, ALRT, MOM_HLRT)


@dataclass(frozen=True)
class CandidateSet:
    """Ordered hypotheses with implicit uniform prior."""

    specs: tuple

    def __post_init__(self):
        specs = tuple(self.specs)
        if len(specs) < 2:
            raise ConfigurationError("a candidate set needs at least two formats")
        ids = [spec.format_id for spec in specs]
        if len(set(ids)) != len(ids):
            raise ConfigurationError(f"duplicate formats in candidate set: {ids}")
        object.__setattr__(self, "specs", specs)

    def __iter__(self):
        return iter(self.specs)

    def __len__(self):
        return len(self.specs)

    @property
    def format_ids(self) -> list[str]:
        return [spec.format_id for spec in self.specs]


@dataclass(frozen=True, eq=False)
class ClassificationResult:
    decision_index: int
    per_hypothesis_llf: list
    method_tag: str
    per_hypothesis_em: Optional[list] = field(default=None, repr=False)

    @property
    def decision_em(self) -> Optional[EmResult]:
        if self.per_hypothesis_em is None:
            return None
        return self.per_hypothesis_em[self.decision_index]


def decide(llfs: Sequence[float]) -> int:
    """Index of the largest LLF; the lowest index wins exact ties."""
    return int(np.argmax(np.asarray(llfs, dtype=float)))


def _specs(candidates) -> list[ConstellationSpec]:
    specs = list(candidates)
    if not specs:
        raise ConfigurationError("no candidate formats")
    return specs


def classify_em_hml(r, candidates, options: EmOptions | None = None,
                    true_snr_db: Optional[float] = None) -> ClassificationResult:
    """Fit each hypothesis by moment initialization plus EM, then pick the max LLF.

    ``true_snr_db`` is only consulted when ``options.grid_refine == "true"``.
    """
    options = options or EmOptions()
    r = as_samples(r)
    results = []
    for spec in _specs(candidates):
        try:
            init = initialize(r, spec, options, true_snr_db)
            results.append(run_em(r, spec, init, options))
        except NumericError as exc:
            raise NumericError(f"hypothesis {spec.format_id}: {exc}") from exc
    llfs = [result.final_llf for result in results]
    return ClassificationResult(decide(llfs), llfs, EM_HML, results)


def classify_alrt(r, candidates, true_channel) -> ClassificationResult:
    """Clairvoyant classifier: likelihood at the true channel for every hypothesis."""
    r = as_samples(r)
    if np.size(true_channel.gains) != r.shape[0]:
        raise ConfigurationError(f"channel has {np.size(true_channel.gains)} sensors, data has {r.shape[0]}")
    llfs = [log_likelihood(r, true_channel, spec) for spec in _specs(candidates)]
    return ClassificationResult(decide(llfs), llfs, ALRT)


def classify_mom(r, candidates, options: EmOptions | None = None) -> ClassificationResult:
    """Likelihood at the pure moment estimates (no phase grid search, no EM)."""
    options = options or EmOptions()
    options = replace(options, grid_refine="off")
    r = as_samples(r)
    llfs = []
    for spec in _specs(candidates):
        estimate = initialize(r, spec, options)
        llfs.append(log_likelihood(r, estimate, spec))
    return ClassificationResult(decide(llfs), llfs, MOM_HLRT)
