"""Spatially dependent partition priors and Gaussian cluster models."""

from .spatial import (
    LocationSet,
    Partition,
    standardize,
    cluster_centroid_spread,
    is_spatially_connected,
    enumerate_partitions,
    bell_number,
)
from .cohesion import (
    NiwParams,
    CohesionConfig,
    niw_log_marginal,
    niw_log_double_dip,
    log_cohesion,
    log_cohesion_ratio,
)
from .prior import (
    WeightedPartitionDraw,
    PriorSummary,
    sample_partition_sequential,
    exact_prior,
    prior_summaries,
    coclustering_matrix,
)
from .correlation import (
    exp_cov,
    effective_range,
    phi_for_effective_range,
    corr_prop1,
    corr_prop2,
    corr_prop3,
)
from .metrics import lpml, waic, mse, mspe, adjusted_rand, dahl_estimate
from .models import (
    Dataset,
    CpsSpec,
    JointSpec,
    McmcConfig,
    PosteriorSamples,
    fit_cps,
    predict_cps,
    fit_joint,
    predict_joint,
)
from .datagen import (
    SimScenario,
    SimTruth,
    gen_locations,
    gen_gp_field,
    gen_dataset,
    gen_fig1_fields,
)

__version__ = "0.1.0"
