"""Optional heatmap rendering for evaluation grids."""

import os


def write_heatmaps(grid, out_dir) -> list:
    """One PNG per (model_type, group): w on the x-axis, p on the y-axis,
    cell shade = mean F1 (darker = better). Returns the written paths."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    os.makedirs(out_dir, exist_ok=True)
    combos = sorted({(mt, g) for (mt, g, _, _) in grid.cells})
    written = []
    for model_type, group in combos:
        ws = sorted({w for (mt, g, w, _) in grid.cells if (mt, g) == (model_type, group)})
        ps = sorted({p for (mt, g, _, p) in grid.cells if (mt, g) == (model_type, group)})
        mat = np.full((len(ps), len(ws)), np.nan)
        for i, p in enumerate(ps):
            for j, w in enumerate(ws):
                val = grid.get(model_type, group, w, p)
                if val is not None:
                    mat[i, j] = val
        fig, ax = plt.subplots(figsize=(4, 5))
        im = ax.imshow(mat, origin="lower", aspect="auto", cmap="Greys",
                       vmin=0.0, vmax=1.0,
                       extent=(ws[0] - 0.5, ws[-1] + 0.5, ps[0] - 0.5, ps[-1] + 0.5))
        ax.set_xlabel("training window w (days)")
        ax.set_ylabel("prediction day p")
        ax.set_title(f"{model_type} / {group}")
        fig.colorbar(im, ax=ax, label="mean F1")
        path = os.path.join(out_dir, f"{model_type}_{group}.png")
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written
