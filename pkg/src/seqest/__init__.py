"""Sequential and multistage stopping rules for estimating a mean with
prescribed coverage, with asymptotic diagnostics and a seeded Monte Carlo
verification harness."""

from .asymptotics import (
    AsymptoticReport,
    be_tail_bound,
    critical_index,
    fixed_size,
    lambda_table,
    normal_cdf,
    normal_quantile,
    pbar_pund_q,
    predict,
    var_tail_bound,
)
from .errors import (
    ConfigError,
    DomainError,
    HorizonError,
    NonConvergenceError,
    OverflowCapError,
    ScheduleValidationError,
    SeqestError,
    UnsupportedOperationError,
)
from .margins import (
    MarginShape,
    absolute_shape,
    check_shape,
    custom_shape,
    kappa,
    margin_lower,
    margin_upper,
    mixed_shape,
    multiplicative_shape,
    relative_shape,
    report_margins,
    shape_from_config,
)
from .models import (
    ArrayStream,
    MeanModel,
    ModelStream,
    Moments,
    SampleState,
    bernoulli_model,
    cumulant,
    cumulant_domain,
    exponential_model,
    mean_cdf,
    model_from_config,
    moments,
    normal_model,
    opaque_uniform_mixture,
    poisson_model,
    sample,
    true_params,
    variance,
)
from .rate_fn import RateEval, quad_ratio, rate, rate_numeric
from .schedules import (
    SeqSchedule,
    StageSchedule,
    delta_seq,
    limiting_delta,
    stage_sizes,
    start_n,
    tau,
    validate_seq_schedule,
    validate_stage_schedule,
)
from .sim import (
    SimConfig,
    SimSummary,
    SweepResult,
    risk_bound_check,
    run_trials,
    sweep,
    trial_seed,
    wilson_interval,
    write_summary_csv,
    write_trials_csv,
)
from .stopping import (
    StoppingRule,
    TrialOutcome,
    decide_cdf,
    decide_df,
    decide_ld,
    decide_nal,
    rule_from_config,
    run_multistage,
    run_sequential,
)

__version__ = "0.1.0"
