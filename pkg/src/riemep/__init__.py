"""Equilibrium problems on Riemannian manifolds: geometry, bifunctions, proximal point solvers."""

from .manifolds import (
    Euclidean,
    Hyperbolic,
    Manifold,
    Product,
    Sphere,
    convexity_radius,
    distance,
    euclidean,
    exp,
    hyperbolic2,
    log_min,
    parallel_transport,
    product,
    sphere2,
)
from .sets import (
    Box,
    ConstraintSet,
    Interval,
    MetricBall,
    ProductSet,
    SphericalCap,
    WholeManifold,
    check_weak_pole,
    contains,
    geodesic_within,
    project,
)
from .bifunctions import (
    Bifunction,
    VectorField,
    check_monotone,
    check_pointwise_weak_convexity,
    gv,
    gz,
    lipschitz_estimate,
    optimization,
    regularize,
    subgradient_AF,
    zero,
)
from .solvers import (
    LambdaSchedule,
    ResolventProblem,
    SolverConfig,
    SolverTrace,
    algorithm_p,
    brute_force_ep,
    ep_residual,
    resolvent,
    verify_inclusion_vip_ep,
    vip_residual,
)

__version__ = "0.1.0"
