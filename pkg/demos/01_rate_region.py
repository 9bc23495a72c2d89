# %% [markdown]
# # Two cells, one channel
#
# Two base stations each hold the messages of both mobiles and split their
# power between them.  The receivers treat whatever is not theirs as noise.
# This walk-through traces the achievable rate region on a single channel
# and compares it with the case where each station only serves its own
# mobile.

# %%
import numpy as np

from ncoop import frontier, max_weighted_sum_rate
from ncoop.baselines import noncoop_power_control
from ncoop.narrowband import max_rate

g = (1.0, 0.3, 0.3, 1.0)        # g11, g21, g12, g22; gjk is station k -> mobile j
budget = (5.0, 5.0)

# %% [markdown]
# Sweep the rate of mobile 1 and ask for the best rate of mobile 2.  Every
# point is the optimum of a small linear-fractional program.

# %%
print(f"{'R1':>6} {'R2 coop':>9} {'R2 own-only':>12}  regime")
top_own = np.log2(1 + g[0] * budget[0])
for fp in frontier(g, budget, 9):
    R1 = fp.rates.R1
    own = (noncoop_power_control(g, budget, R1, mode="frontier").value
           if R1 <= top_own else float("nan"))
    print(f"{R1:6.3f} {fp.rates.R2:9.3f} {own:12.3f}  {fp.regime}")

# %% [markdown]
# Past ``log2(1 + g11 P1)`` only cooperation can serve mobile 1: both stations
# must point their power at it.

# %%
print("largest R1 with cooperation:", round(max_rate(g, budget, 1), 3))
print("largest R1 without:        ", round(top_own, 3))

# %% [markdown]
# Weighted sum rates pick out points on the boundary.  With equal weights
# the best point is always one where every station sends to a single
# mobile; other weights can land on interior stationary points.

# %%
for mu in (0.5, 1.0, 3.0):
    res = max_weighted_sum_rate(g, budget, mu)
    p = res.allocation
    print(f"mu={mu}: R1+mu*R2={res.rate:.3f} via {res.candidate_name} "
          f"(P11={p.P11:.2f}, P21={p.P21:.2f}, P12={p.P12:.2f}, P22={p.P22:.2f})")
