"""Divisible sandpile laboratory: heavy-tailed configurations, odometers,
Green-function diagnostics, and stable scaling limits on the discrete torus."""

__version__ = "0.1.0"

from .engine import (
    DichotomyReport,
    MassField,
    NestedTrace,
    OdometerField,
    ToppleResult,
    classify_trace,
    dichotomy_experiment,
    init_configuration,
    nested_stabilize,
    odometer_exact,
    tail_bound_check,
    topple_to_stability,
    ve_series_probe,
)
from .greens import (
    BoxDomain,
    GreenRow,
    killed_green,
    killed_green_mc,
    lattice_green_series,
    nu_alpha,
    shell_enumeration,
    torus_green_row,
    zd_green_reference,
    zd_green_values,
)
from .laws import HeavyTailLaw, empirical_cf, normalized_sum_probe, quantile, sample
from .scaling import (
    ScalingKernel,
    TestFunction,
    cell_averages,
    cell_integral,
    convergence_sweep,
    coupling_probe,
    eval_test_function,
    exact_cf_finite_n,
    fourier_discrepancy,
    kernel_kn,
    kn_sup_check,
    limit_functional,
    mc_cf,
    pair_field,
    stability_property_check,
)
from .streams import stream
from .torus import (
    NonConservedMassError,
    SiteField,
    TorusGrid,
    dft_forward,
    dft_inverse,
    dump_site_field,
    laplacian_apply,
    laplacian_eigenvalue,
    load_site_field,
    poisson_solve,
)
