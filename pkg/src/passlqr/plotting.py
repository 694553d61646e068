"""SVG figures for two-parameter gains: regions, atlas, box, contours, flows."""

import numpy as np

from .errors import DimensionUnsupported
from .raster import cost_grid, passivity_grid, stability_grid

DEFAULT_RESOLUTION = 201


def _require_2d(plant):
    if plant.m * plant.n != 2:
        raise DimensionUnsupported(
            f"plots need a two-parameter gain, this plant has m*n = {plant.m * plant.n}")


def default_window(region=None, trajectories=(), anchors=(), margin=0.3):
    """Bounding window of the atlas, trajectories and anchor points."""
    points = []
    if region is not None:
        for cube in region.cubes:
            points.append(cube.center - 0.5 * cube.edge)
            points.append(cube.center + 0.5 * cube.edge)
    for traj in trajectories:
        for s in traj.samples:
            points.append(s.k)
    for a in anchors:
        if a is not None:
            pt = np.asarray(a, dtype=float).ravel()
            points.append(pt - 1.0)
            points.append(pt + 1.0)
    if not points:
        raise ValueError("no geometry to derive a window from")
    pts = np.array(points)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-3)
    return np.column_stack([lo - margin * span, hi + margin * span])


def render_figure(plant, mode, out_path, region=None, polytope=None, trajectories=(),
                  k_star=None, f_star=None, window=None, resolution=DEFAULT_RESOLUTION,
                  passivity_resolution=None, draw_passivity=True, seed=0, workers=1):
    """Compose the synthesis picture and write an SVG file.

    Layers: stability boundary (spectral abscissa zero contour), passivity
    classification raster, verified cubes, inscribed box outline, cost
    contours relative to f*, flow trajectories and the unconstrained optimum.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Rectangle

    _require_2d(plant)
    if window is None:
        window = default_window(region, trajectories, anchors=(k_star,))
    window = np.asarray(window, dtype=float)
    k1 = np.linspace(window[0, 0], window[0, 1], resolution)
    k2 = np.linspace(window[1, 0], window[1, 1], resolution)

    fig, ax = plt.subplots(figsize=(7.0, 5.6))

    abscissa = stability_grid(plant, k1, k2)
    ax.contour(k1, k2, abscissa.T, levels=[0.0], colors="dimgray",
               linestyles="dashed", linewidths=1.2)
    ax.contourf(k1, k2, (abscissa < 0).T.astype(float), levels=[0.5, 1.5],
                colors=["#f2f2f2"], alpha=0.6)

    if draw_passivity:
        pres = passivity_resolution or resolution
        pk1 = np.linspace(window[0, 0], window[0, 1], pres)
        pk2 = np.linspace(window[1, 0], window[1, 1], pres)
        passive = passivity_grid(plant, mode, pk1, pk2, seed=seed, workers=workers)
        ax.contourf(pk1, pk2, passive.T.astype(float), levels=[0.5, 1.5],
                    colors=["#9fd3a6"], alpha=0.55)

    costs = cost_grid(plant, k1, k2)
    if f_star is not None:
        rel = costs - f_star
        finite = rel[np.isfinite(rel)]
        if finite.size:
            levels = np.quantile(finite, np.linspace(0.05, 0.9, 9))
            levels = np.unique(levels[levels > 0.0])
            if levels.size:
                cs = ax.contour(k1, k2, rel.T, levels=levels, colors="steelblue",
                                linewidths=0.7, alpha=0.8)
                ax.clabel(cs, fontsize=6, fmt="%.2g")

    if region is not None:
        for cube in region.cubes:
            ax.add_patch(Rectangle(cube.center - 0.5 * cube.edge, cube.edge, cube.edge,
                                   fill=False, edgecolor="seagreen", linewidth=0.8))

    if polytope is not None:
        # box rows are ordered (+e1, -e1, +e2, -e2): bounds sit in h
        lo = np.array([-polytope.h[0], -polytope.h[2]])
        hi = np.array([polytope.h[1], polytope.h[3]])
        ax.add_patch(Rectangle(lo, hi[0] - lo[0], hi[1] - lo[1], fill=False,
                               edgecolor="firebrick", linewidth=2.0, label="inner box"))

    for idx, traj in enumerate(trajectories):
        path = np.array([s.k for s in traj.samples])
        ax.plot(path[:, 0], path[:, 1], color="black", linewidth=1.4,
                label="flow" if idx == 0 else None)
        ax.plot(path[0, 0], path[0, 1], "o", color="black", markersize=4)
        ax.plot(path[-1, 0], path[-1, 1], "s", color="firebrick", markersize=5)

    if k_star is not None:
        ks = np.asarray(k_star, dtype=float).ravel()
        ax.plot(ks[0], ks[1], "*", color="goldenrod", markersize=12, label="unconstrained optimum")

    ax.set_xlim(window[0])
    ax.set_ylim(window[1])
    ax.set_xlabel("$K_1$")
    ax.set_ylabel("$K_2$")
    title = plant.name or "gain-space synthesis"
    ax.set_title(f"{title} ({mode.kind})")
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path
