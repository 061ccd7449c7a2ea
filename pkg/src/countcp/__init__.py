"""CP factorization toolkit for sparse count tensors.

Builds four-way (sender, receiver, action, time) count tensors from dyadic
event records, factorizes them with Bayesian Poisson CP factorization or
multiplicative-update baselines, evaluates heldout prediction under the
strong-generalization protocol, and ranks inferred components by the
sparsity of their time profiles.
"""

from .bptf import (
    FitConfig,
    FitTrace,
    Hyperparameters,
    VariationalState,
    compute_elbo,
    fit,
    infer_heldout_time_factors,
    init_state,
    load_state,
    point_estimate,
    save_state,
    update_beta,
    update_delta,
    update_gamma,
    write_trace,
)
from .components import (
    ComponentSummary,
    gini,
    rank_components,
    summarize,
    write_component_reports,
)
from .cp import (
    FactorSet,
    generalized_kl,
    load_factors,
    poisson_log_likelihood,
    reconstruct,
    reconstruct_dense,
    reconstruct_entries,
    save_factors,
    total_recon_mass,
)
from .errors import (
    ConfigError,
    CountCPError,
    DataError,
    DegenerateUpdateError,
    EmptyRegionError,
    EmptyTensorError,
    InadmissibleZeroError,
    IngestionError,
    LabelMismatchError,
    NumericalDegeneracyError,
    NumericalError,
    SpecValidationError,
    SplitError,
    UndefinedStatisticError,
)
from .evaluation import (
    EvalReport,
    ExperimentSpec,
    ham_z,
    mae,
    mae_nz,
    region_metrics,
    run_experiment,
    run_table,
    write_report_json,
    write_report_text,
)
from .masking import CellMask, Region, apply_mask, top_block_mask
from .ntf import (
    NtfConfig,
    ObjectiveTrace,
    fit_ntf,
    infer_heldout_time_factors_ntf,
    ntf_kl_sweep,
    ntf_ls_sweep,
    squared_error,
)
from .synth import expected_total_count, sample_count_tensor, sample_factors
from .tensors import (
    EventRecord,
    SparseCountTensor,
    TimeSplit,
    concat_time,
    density,
    ingest_events,
    load_labels,
    load_tensor,
    read_event_file,
    save_labels,
    save_tensor,
    sort_by_activity,
    split_time,
    vmr_nonzero,
    write_event_file,
)

__version__ = "0.1.0"
