"""Multi-radio hybrid maximum-likelihood modulation classification with EM."""

from .channel import (
    ChannelRealization,
    FadingModel,
    ObservationBlock,
    load_iq_block,
    sample_channel,
    synthesize,
    write_iq_block,
)
from .classifier import (
    ALRT,
    EM_HML,
    MOM_HLRT,
    CandidateSet,
    ClassificationResult,
    classify_alrt,
    classify_em_hml,
    classify_mom,
)
from .constellation import ConstellationSpec, build_constellation
from .em import EmOptions, EmResult, e_step, initialize, log_likelihood, m_step, run_em
from .experiment import AggregateResult, ExperimentConfig, aggregate, run_experiment, write_results
from .moments import NuisanceEstimate, ml_known_symbols

__version__ = "0.1.0"
