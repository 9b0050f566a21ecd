"""Deterministic spectral theory of sample covariance matrices, with Monte Carlo checks."""

from .ensemble import SampleEigenvalues, SampleSpec, empirical_stieltjes, generate_sample, replicate
from .lawcheck import LawCheckReport, check_global, check_local, check_outside, check_rigidity, fit_loglog
from .solver import SolverConfig, StieltjesSolution, solve_general, solve_m1, solve_m1o
from .spectrum import (
    Dimensions,
    PopulationSpectrum,
    SpectralPoint,
    SpikedModel,
    identity_spectrum,
    make_spectrum,
    rescale_point,
    spectrum_from_json,
    spiked_to_full,
)
from .spikes import (
    SpikeCluster,
    SpikeEstimate,
    bai_ding_averaged,
    bai_ding_pointwise,
    check_distance_spike,
    detect_clusters,
    estimate_spikes,
    location_check,
    mestre_estimate,
    mestre_poles,
    psi,
    psi_prime,
    rate_experiment,
)
from .support import (
    ClassicalLocations,
    SupportMap,
    classical_locations,
    critical_points,
    density,
    density_w,
    in_domain,
    m1_real_axis,
    support_map,
)

__version__ = "0.1.0"
