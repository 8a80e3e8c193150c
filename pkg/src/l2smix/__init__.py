"""Dynamic System-1/System-2 training-data reweighting for reasoning compression."""

from .benefit import (
    AbilityBounds,
    ReferenceProfile,
    ValidationReport,
    benefit_signal,
    estimate_bounds,
    lambda_sys1,
    lambda_sys2,
    objective,
    phi_sys1,
    phi_sys2,
)
from .data import Batch, DataPool, InstructionPair, filter_correct, load_pool, sample_batch, tag_by_difficulty
from .metrics import (
    avg_compression_rate,
    compression_rate,
    keyword_frequency,
    normalized_accuracy,
    normalized_token,
    summarize,
    token_count,
)
from .mixture import ReweightConfig, average_weights, eg_update, validate_simplex
from .pipeline import CheckpointRecord, RunConfig, RunLog, load_config, run_pipeline, select_checkpoint
from .simulator import ProxyState, ResponseSurface, evaluate, reference_reports, train_step

__version__ = "0.1.0"
