"""Sticky-reflecting Brownian motion on the half-space.

Closed-form transition kernel, intrinsic cost and geodesics, exact path
sampling, large-deviation slope experiments, and optimal transport with the
intrinsic cost.
"""

from .geometry import (
    INFINITE_ACTION,
    GeodesicDescription,
    GeodesicSegment,
    HalfSpacePoint,
    ModelParams,
    Path,
    action,
    cone_contains,
    cone_threshold,
    cost,
    cost_batch,
    euclidean_rate,
    geodesic,
    hamiltonian,
    lagrangian,
    point,
    sliced_cost,
    sticky_rate,
    sticky_rate_profile,
)
from .quadrature import QuadratureError, QuadratureSpec
from .kernel import (
    KernelValue,
    bivariate_density,
    chapman_kolmogorov_residual,
    fokker_planck_residual,
    gaussian_density,
    hitting_density,
    kernel_total_mass,
    killed_kernel,
    log_mu_density,
    log_transition_kernel,
    mu_density,
    transition_kernel,
)
from .simulate import (
    SamplePath,
    SimConfig,
    modulus_statistics,
    simulate,
    simulate_batch,
    simulate_many,
    step_horizontal,
    step_vertical,
)
from .ldp import (
    Ball,
    BoundaryPatch,
    LdpEstimate,
    StaticExperiment,
    phase_transition_scan,
    sliced_ldp,
    static_ldp,
)
from .transport import (
    DiscreteMeasure,
    TransportPlan,
    displacement_interpolation,
    gamma_limit_experiment,
    kantorovich,
    schrodinger,
)
from .pathopt import minimize_path_action

__version__ = "0.1.0"
