"""cellcap: ARQ delay and downlink capacity of PPP cellular networks.

Monte Carlo simulation of the typical mobile user's retransmission delay
under the SINR model, plus numerical evaluation of the matching closed-form
delay bounds (polynomial in the low-density regime, exponential in the
high-density regime) and the capacity figures lambda/E{D} they imply.
"""

__version__ = "0.1.0"

from .arq_sim import (
    DelayStats,
    SimScenario,
    finite_r_capacity,
    simulate_delay,
    simulate_enhanced_lb_network,
    simulate_fixed_deployment,
    simulate_multiantenna,
)
from .bounds import (
    BoundCurve,
    BoundParams,
    evaluate_curve,
    laplace_product_check,
    lb_coordination,
    lb_csir,
    lb_highdensity,
    lb_lowdensity,
    ub_powercontrol,
)
from .channel import (
    FadingModel,
    SlotOutcome,
    compute_sinr,
    draw_fading,
    one_shot_connection_prob,
    pathloss,
)
from .errors import ConfigError, RequestError, ToleranceError
from .geometry import (
    NetworkConfig,
    NetworkRealization,
    kth_nearest_pdf,
    nearest_dist_cdf,
    realization_rng,
    sample_realization,
    voronoi_neighbors,
)
from .strategies import (
    CsitThreshold,
    DistanceAloha,
    PowerControl,
    PureAloha,
    ThresholdPolicy,
    decide,
    interferer_assignment,
    solve_threshold,
    success_prob_threshold,
)

__all__ = [
    "__version__",
    "ConfigError",
    "RequestError",
    "ToleranceError",
    "NetworkConfig",
    "NetworkRealization",
    "realization_rng",
    "sample_realization",
    "nearest_dist_cdf",
    "kth_nearest_pdf",
    "voronoi_neighbors",
    "FadingModel",
    "SlotOutcome",
    "pathloss",
    "draw_fading",
    "compute_sinr",
    "one_shot_connection_prob",
    "PureAloha",
    "DistanceAloha",
    "PowerControl",
    "CsitThreshold",
    "ThresholdPolicy",
    "decide",
    "solve_threshold",
    "success_prob_threshold",
    "interferer_assignment",
    "SimScenario",
    "DelayStats",
    "simulate_delay",
    "simulate_enhanced_lb_network",
    "simulate_multiantenna",
    "simulate_fixed_deployment",
    "finite_r_capacity",
    "BoundParams",
    "BoundCurve",
    "lb_lowdensity",
    "lb_highdensity",
    "lb_csir",
    "ub_powercontrol",
    "lb_coordination",
    "laplace_product_check",
    "evaluate_curve",
]
