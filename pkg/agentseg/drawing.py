# -*- coding: utf-8 -*-

"""
agentseg.drawing
----------------

Static exports of the analytics artifacts: transition graph and grid heatmaps
as SVG (svgwrite), heatmaps as PNG (matplotlib).
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

# pylint: disable=wrong-import-position
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import svgwrite  # noqa: E402

from agentseg.utils.loghelper import LOG  # noqa: E402

FONT_ATTR = {
    "fill": "black",
    "stroke": "black",
    "stroke_width": 0,
    "font_family": "Verdana",
}


def _gray(value: float) -> str:
    """Hex gray level, 0 -> white, 1 -> black"""
    level = int(round(255 * (1.0 - min(max(value, 0.0), 1.0))))
    return f"#{level:02x}{level:02x}{level:02x}"


def transition_graph_svg(
    edges, n_agents: int, size: float = 400.0, radius: float = 14.0
) -> svgwrite.Drawing:
    """Drawing of the thresholded transition graph, agents on a circle"""
    dwg = svgwrite.Drawing(size=(size, size))
    center = size / 2.0
    ring = center - 2.5 * radius
    positions = []
    for index in range(n_agents):
        angle = 2.0 * math.pi * index / max(n_agents, 1) - math.pi / 2.0
        positions.append(
            (center + ring * math.cos(angle), center + ring * math.sin(angle))
        )
    marker = dwg.marker(id="arrow", insert=(8, 4), size=(8, 8), orient="auto")
    marker.add(dwg.path(d="M0,0 L8,4 L0,8 z", fill="#404040"))
    dwg.defs.add(marker)
    for source, target, weight in edges:
        (x0, y0), (x1, y1) = positions[source], positions[target]
        length = math.hypot(x1 - x0, y1 - y0) or 1.0
        ux, uy = (x1 - x0) / length, (y1 - y0) / length
        line = dwg.line(
            start=(x0 + radius * ux, y0 + radius * uy),
            end=(x1 - radius * ux, y1 - radius * uy),
            stroke="#404040",
            stroke_width=1.0 + 4.0 * weight,
            opacity=0.85,
        )
        line.set_markers((None, False, marker))
        dwg.add(line)
        dwg.add(
            dwg.text(
                f"{weight:.3f}",
                insert=((x0 + x1) / 2.0 + 4.0, (y0 + y1) / 2.0 - 4.0),
                font_size=9,
                **FONT_ATTR,
            )
        )
    for index, (x, y) in enumerate(positions):
        dwg.add(dwg.circle(center=(x, y), r=radius, fill="#d0e4f5", stroke="black"))
        dwg.add(
            dwg.text(
                str(index),
                insert=(x, y + 4.0),
                text_anchor="middle",
                font_size=11,
                **FONT_ATTR,
            )
        )
    return dwg


def save_transition_graph_svg(fname: str, edges, n_agents: int):
    """Save the thresholded transition graph"""
    dwg = transition_graph_svg(edges, n_agents)
    dwg.saveas(fname, pretty=True)
    LOG.debug("** drawing::save_transition_graph_svg {}".format({"fname": fname}))


def heatmap_svg(values, cell: float = 24.0, label: bool = True) -> svgwrite.Drawing:
    """Drawing of a grid as gray cells (darker is larger)"""
    values = np.asarray(values, dtype=float)
    rows, cols = values.shape
    vmax = float(values.max()) if values.size and values.max() > 0 else 1.0
    dwg = svgwrite.Drawing(size=(cols * cell, rows * cell))
    for row in range(rows):
        for col in range(cols):
            value = values[row, col]
            dwg.add(
                dwg.rect(
                    insert=(col * cell, row * cell),
                    size=(cell, cell),
                    fill=_gray(value / vmax),
                    stroke="#c0c0c0",
                    stroke_width=0.5,
                )
            )
            if label and value > 0:
                attrs = dict(FONT_ATTR)
                if value / vmax > 0.5:
                    attrs.update(fill="white", stroke="white")
                dwg.add(
                    dwg.text(
                        f"{value:g}",
                        insert=((col + 0.5) * cell, (row + 0.65) * cell),
                        text_anchor="middle",
                        font_size=cell * 0.4,
                        **attrs,
                    )
                )
    return dwg


def save_heatmap_svg(fname: str, values, label: bool = True):
    """Save a grid as an SVG heatmap"""
    heatmap_svg(values, label=label).saveas(fname, pretty=True)
    LOG.debug("** drawing::save_heatmap_svg {}".format({"fname": fname}))


def save_heatmap_png(fname: str, values, extent=None, title: str | None = None):
    """Save a grid as a PNG heatmap (row 0 at the top, as in image coordinates)

    Args:
        fname: output file name
        values: (rows, cols) grid
        extent: scene (width, height) used for axis labels
        title: figure title
    """
    values = np.asarray(values, dtype=float)
    height = 3.6 if extent is None else 6.4 * extent[1] / extent[0]
    fig, ax = plt.subplots(figsize=(6.4, height))
    kwargs = {}
    if extent is not None:
        kwargs["extent"] = (0.0, extent[0], extent[1], 0.0)
    image = ax.imshow(values, cmap="hot", origin="upper", **kwargs)
    fig.colorbar(image, ax=ax)
    if title:
        ax.set_title(title)
    fig.savefig(fname, dpi=100)
    plt.close(fig)
    LOG.debug("** drawing::save_heatmap_png {}".format({"fname": fname}))
