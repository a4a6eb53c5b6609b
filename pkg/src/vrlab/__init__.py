"""Variance-reduced optimizers, flat-minima metrics, and a seeded experiment harness."""

from .models import (
    Model, MeanQuadratic, LogisticRegression, TwoLayerMLP, LambdaMaxResult,
    per_sample_loss, per_sample_grad, batch_grad, hvp, lambda_max, check_grad_fd,
)
from .data import (
    Sample, Dataset, SplitSpec, BatchPlan, CsvFormatError,
    gen_quadratic_family, gen_blobs, load_csv, split_dataset, standardize,
    sample_outer_batch, inner_slices,
)
from .optim import (
    Schedule, OptimizerState, init_state, lr_at_epoch, sgd_step,
    svrg_outer_iteration, modified_sgd_outer_iteration, grad_evals_for,
    SGD_METHODS, SVRG_METHODS, ALL_METHODS, SIGN_OF_METHOD,
)
from .metrics import (
    MetricRecord, SharpnessEstimate, SharpnessBound, BoundReport,
    avg_sq_grad_norm, full_sq_grad_norm, gaussian_sharpness,
    data_relevant_sharpness, sharpness_upper_bound,
    generalization_bound_check, gap_metrics, moving_average,
)
from .config import (
    ConfigError, DatasetSpec, ModelSpec, MethodSpec, ExperimentConfig,
    parse_config, parse_config_text,
)
from .harness import (
    RunRecord, MethodSummary, RunResult, budget_matched_epochs, build_task,
    run_experiment, run_single, write_results, load_results,
)

__version__ = "0.1.0"
