"""Rate regions, power allocation and beamforming for noncoherent two-cell downlink cooperation."""

__version__ = "0.1.0"

from .channel import (ChannelError, MisoChannel, NarrowbandGains, PowerBudget, WidebandChannel,
                      alignment_angle, generate_wideband_miso, generate_wideband_scalar)
from .lp import LinearProgram, LPResult, solve_lp
from .narrowband import (FrontierPoint, PowerAllocation, RatePair, RateTargetError, frontier,
                         frontier_point, lemma1_check, max_weighted_sum_rate, rate_pair)
from .wideband import (DualSearchError, SearchConfig, WidebandAllocation, dual_solve,
                       highsnr_waterfill, inner_maximize, subcarrier_best_rate, sum_rate)
from .beamforming import (BeamConfig, BFSearchConfig, beamformer_from_angle, frontier_bf,
                          max_weighted_sum_rate_bf, rate_pair_bf, wideband_bf_dual_solve)
from .baselines import (coherent_upper_baseline, equal_power_coop, noncoop_nullspace_bf,
                        noncoop_power_control, zf_rate_pair)

__all__ = [
    "ChannelError", "MisoChannel", "NarrowbandGains", "PowerBudget", "WidebandChannel",
    "alignment_angle", "generate_wideband_miso", "generate_wideband_scalar",
    "LinearProgram", "LPResult", "solve_lp",
    "FrontierPoint", "PowerAllocation", "RatePair", "RateTargetError", "frontier",
    "frontier_point", "lemma1_check", "max_weighted_sum_rate", "rate_pair",
    "DualSearchError", "SearchConfig", "WidebandAllocation", "dual_solve", "highsnr_waterfill",
    "inner_maximize", "subcarrier_best_rate", "sum_rate",
    "BeamConfig", "BFSearchConfig", "beamformer_from_angle", "frontier_bf",
    "max_weighted_sum_rate_bf", "rate_pair_bf", "wideband_bf_dual_solve",
    "coherent_upper_baseline", "equal_power_coop", "noncoop_nullspace_bf",
    "noncoop_power_control", "zf_rate_pair",
]
