"""Fine-grained systemic risk from cluster-stratified resampling.

With one representative drawn per cluster, a short 8-quarter window tracks
concentration at much finer time resolution than the 60-quarter window
allows.  Averaging over 50 random draws smooths the sampling noise; the
resulting absorption ratio curve reacts quickly when the common factor
strengthens.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

import panelcorr as pc
from panelcorr.ingest import Quarter, ReturnPanel

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

# ---------------------------------------------------------------------------
# six planted clusters; the market factor switches on in the second half
# ---------------------------------------------------------------------------
rng = np.random.default_rng(8)
n, T = 48, 120
market = rng.normal(size=T)
betas = np.concatenate([np.full(T // 2, 0.2), np.full(T - T // 2, 1.2)])
groups = [list(range(i * 8, (i + 1) * 8)) for i in range(6)]
factors = rng.normal(size=(6, T))
returns = betas * market + 0.6 * rng.normal(size=(n, T))
for c, group in enumerate(groups):
    returns[group] += 0.7 * factors[c]

quarters = Quarter.span(Quarter(1985, 1), T)
entities = [f"S{i:02d}" for i in range(n)]
panel = ReturnPanel(entities, quarters, returns)
named_groups = [[entities[i] for i in g] for g in groups]
print(f"panel: {n} entities in 6 clusters of 8; market switches on at {quarters[T // 2]}")

out = pc.cluster_sampled_absorption(panel, named_groups, window_size=8,
                                    resamples=50, seed=4)
ratios = out.absorption_ratios()
print(f"{len(out.window_ends)} short windows of {out.window_size} quarters, "
      f"{out.resamples} resamples")

switch = quarters.index(quarters[T // 2])
head = ratios[: switch - 8, 0].mean()
tail = ratios[switch:, 0].mean()
print(f"mean top-eigenvalue absorption before switch {head:.3f}, after {tail:.3f}")

fig, ax = plt.subplots(figsize=(8, 4))
for k in range(3):
    ax.plot([str(q) for q in out.window_ends], ratios[:, k], label=f"top {k + 1}")
ax.axvline(switch - 7, color="k", ls="--", lw=1)
ax.set_xticks(range(0, len(out.window_ends), 12))
ax.set_xticklabels([str(out.window_ends[i]) for i in range(0, len(out.window_ends), 12)],
                   rotation=45)
ax.set_ylabel("absorption ratio (6-series sample)")
ax.legend()
fig.tight_layout()
fig.savefig(OUT / "06_fine_absorption.png", dpi=120)
print(f"wrote {OUT / '06_fine_absorption.png'}")
