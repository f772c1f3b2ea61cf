"""Heat content, heat loss and occupation functionals for ball unions in R^m."""

from .geometry import (Ball, BallUnion, RadiusProfile, FinitenessReport,
                       unit_ball_volume, cap_volume, overlap_volume,
                       make_lattice_config, make_chain_config,
                       mu, nu, total_measure, perimeter, finiteness_report)
from .numerics import (QuadratureSpec, ValueWithError, QuadratureError,
                       integrate, comp_sum, gamma_fn, noncentral_chisq_cdf)
from .kernel import (LiYauConstants, heat_kernel, ball_temperature,
                     ball_heat_content, ball_heat_loss, cross_heat_content,
                     unit_ball_heat_content, unit_ball_heat_loss,
                     li_yau_envelope_check)

__version__ = "0.1.0"
