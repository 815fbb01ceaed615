"""Tracking cluster identities across windows.

Feeds the tracker a hand-built sequence of partitions containing a split and
a merge, and shows how the reverse-time label matching keeps colors stable:
the larger fragment of a split inherits the parent label, new formations get
fresh labels, and the similarity score quantifies window-to-window overlap.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

import panelcorr as pc
from panelcorr.clustering import Partition
from panelcorr.ingest import Quarter, WindowSpec

OUT = pathlib.Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

ENTITIES = [f"S{i:02d}" for i in range(10)]


def partition(end, *clusters):
    clustered = {e for c in clusters for e in c}
    return Partition(
        ENTITIES,
        [list(c) for c in clusters],
        [e for e in ENTITIES if e not in clustered],
        window=WindowSpec(Quarter.parse(end), 60),
    )


story = []
# one big cluster plus a small one
for q in Quarter.span(Quarter(2000, 1), 5):
    story.append(partition(str(q), ENTITIES[:6], ENTITIES[6:9]))
# the big cluster splits
for q in Quarter.span(Quarter(2001, 2), 5):
    story.append(partition(str(q), ENTITIES[:4], ENTITIES[4:6], ENTITIES[6:9]))
# the fragments merge back
for q in Quarter.span(Quarter(2002, 3), 5):
    story.append(partition(str(q), ENTITIES[:6], ENTITIES[6:9]))

configs = pc.color_timeline(story)
print("per-window labels (rows = windows, columns = entities):")
print("           " + " ".join(e[-2:] for e in ENTITIES))
for c in configs:
    print(f"{str(c.window.end_quarter):>8}   " + " ".join(f"{v:2d}" for v in c.labels))
print(f"\npalette: {configs[0].palette}")

similarities = [
    pc.configuration_similarity(a, b) for a, b in zip(configs, configs[1:])
]
print("window-to-window similarity:", np.round(similarities, 3))

fig, ax = plt.subplots(figsize=(8, 4))
grid = np.array([c.labels for c in configs]).T
im = ax.imshow(grid, aspect="auto", cmap="tab10", vmin=0, vmax=9)
ax.set_yticks(range(len(ENTITIES)))
ax.set_yticklabels(ENTITIES)
ax.set_xticks(range(len(configs)))
ax.set_xticklabels([str(c.window.end_quarter) for c in configs], rotation=45)
ax.set_title("cluster identity timeline (0 = unclustered)")
fig.tight_layout()
fig.savefig(OUT / "04_timeline.png", dpi=120)
print(f"\nwrote {OUT / '04_timeline.png'}")
