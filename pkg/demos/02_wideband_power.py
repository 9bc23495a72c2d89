# %% [markdown]
# # Spreading power over subcarriers
#
# With many subcarriers the stations must also decide where to spend
# their power.  The Lagrangian dual splits the problem per subcarrier and
# finds two power prices by nested bisection.  Here it is compared with an
# equal split and with stations that do not share messages.

# %%
import numpy as np

from ncoop import dual_solve, generate_wideband_scalar, highsnr_waterfill
from ncoop.baselines import equal_power_coop, noncoop_power_control_wideband

L, rho, n_trials = 64, 0.95, 4
snr_db = np.arange(0.0, 21.0, 2.5)

# %%
curves = {k: np.zeros(snr_db.size) for k in ("dual", "equal", "own-only", "high-SNR")}
for seed in range(n_trials):
    ch = generate_wideband_scalar(L, (1, 1, 1, 1), rho, seed)
    for i, db in enumerate(snr_db):
        b = (L * 10 ** (db / 10),) * 2
        curves["dual"][i] += dual_solve(ch, b).rate / L / n_trials
        curves["equal"][i] += equal_power_coop(ch, b).rate / L / n_trials
        curves["own-only"][i] += noncoop_power_control_wideband(ch, b).rate / L / n_trials
        curves["high-SNR"][i] += highsnr_waterfill(ch, b).rate / L / n_trials

print("SNR dB " + " ".join(f"{k:>9}" for k in curves))
for i, db in enumerate(snr_db):
    print(f"{db:6.1f} " + " ".join(f"{curves[k][i]:9.3f}" for k in curves))

# %% [markdown]
# Compare schemes horizontally: how much more SNR does a baseline need to
# match the dual solution's rate at 10 dB?

# %%
level = np.interp(10.0, snr_db, curves["dual"])
for k in ("equal", "own-only"):
    print(f"{k}: {np.interp(level, curves[k], snr_db) - 10.0:+.2f} dB")

# %% [markdown]
# The dual also reports how far it could be from the true optimum.

# %%
ch = generate_wideband_scalar(L, (1, 1, 1, 1), rho, 0)
a = dual_solve(ch, (L * 10.0, L * 10.0))
print(f"rate {a.rate:.2f}, dual bound {a.dual_value:.2f}, relative gap {a.relative_gap:.1e}")
print("schemes used:", {s: a.schemes.count(s) for s in sorted(set(a.schemes))})
