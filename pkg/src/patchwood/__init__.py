"""Randomized-tree ensembles with exact and empirical variable importances."""

__version__ = "0.1.0"

from .criteria import (
    ClassStats,
    RegressionStats,
    entropy,
    gini,
    impurity_decrease,
    mse,
    shift_left,
)
from .dataset import (
    CsvSchema,
    DataError,
    Dataset,
    DiscreteJoint,
    FeatureKind,
    duplicate_feature,
    gen_friedman1,
    gen_led,
    gen_linear_gaussian,
    joint_from_dataset,
    led_joint,
    load_csv,
    save_csv,
)
from .forest import (
    Forest,
    ForestConfig,
    Sampling,
    bootstrap,
    deserialize_forest,
    draw_patch,
    fit,
    no_sampling,
    oob_error,
    pasting,
    patch,
    predict_ensemble,
    proximity,
    proximity_matrix,
    random_subspace,
    serialize_forest,
)
from .importance import (
    CmiQuery,
    ImportanceReport,
    analytic_mdi_pruned,
    analytic_mdi_subspace,
    analytic_mdi_trt,
    cmi,
    empirical_trt_forest,
    mdi,
    permutation_importance,
    redundancy_factor_check,
)
from .splitter import (
    BinarySplit,
    MultiwaySplit,
    NodeView,
    draw_random_split_ets,
    draw_random_split_pert,
    find_best_split_feature,
    find_best_split_k,
    multiway_split,
)
from .tree import (
    BuildConfig,
    ModelFormatError,
    TreeArrays,
    apply,
    build,
    build_best_first,
    deserialize,
    predict,
    resubstitution_error,
    serialize,
)
