"""Instrumental-variable effect estimates turned into per-sample label smoothing."""

from ._optim import TrainConfig
from .classifier import SoftLabelClassifier, gradient_check, hidden_representation, predict_proba, train_classifier
from .dataset import BINARY, CONTINUOUS, Dataset, OutcomeGuard, Record, load_dataset, save_dataset
from .encoder import LawArticleEncoder, encode, train_encoder, with_instruments
from .estimation import (
    AteTable,
    CausalEstimate,
    CausalQuery,
    TwoStageLeastSquares,
    ate_table,
    covariance_iv,
    estimate,
    exogeneity_check,
    naive_ate,
    two_stage_least_squares,
    wald_ate,
)
from .exceptions import (
    AteLookupError,
    CausalSmoothError,
    ConfigurationError,
    DataError,
    EstimationError,
    InputError,
    NumericError,
    OutcomeLeakageError,
    PipelineStageError,
    RefutationError,
    ReportIOError,
    SchemaError,
    StratumError,
    TrainingError,
    WeakInstrumentError,
)
from .metrics import DispersionReport, Metrics, confusion_metrics, dispersion
from .pipeline import ExperimentReport, PipelineConfig, emit_report, load_pipeline_config, run_experiment
from .refutation import RefutationReport, bootstrap_refute, placebo_refute, refute_all, subset_refute
from .scm import SCMConfig, generate_dataset, true_ate
from .smoothing import (
    SmoothingConfig,
    SoftLabel,
    causal_epsilon,
    causal_smooth,
    label_smooth,
    soft_cross_entropy,
    zlpr_grad,
    zlpr_loss,
)

__version__ = "0.1.0"
