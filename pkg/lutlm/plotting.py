# -*- coding: utf-8 -*-

"""A module to plot training metrics of several runs side by side"""

import logging
import os

from bokeh.layouts import column
from bokeh.palettes import Category10
from bokeh.plotting import figure, output_file, save, show

from .trainer import read_metrics

logger = logging.getLogger(__name__)

QUANTITIES = [('total_loss', 'Total loss'), ('examples_per_sec', 'Examples / sec'), ('mean_ponder_steps', 'Mean ponder steps')]


def plot_metrics(paths, labels=None, out=None, draw=False):
    """
    Plot loss, speed and ponder steps over training steps, one line per run

    Parameters
    ----------
    paths: sequence
        Metrics CSV files
    labels: sequence (optional)
        Legend labels, the file names by default
    out: str (optional)
        Save the layout to this HTML file
    draw: bool
        Show the layout instead of returning it

    Returns
    -------
    bokeh.models.Column
        The stacked figures
    """
    paths = list(paths)
    if not paths:
        raise ValueError("No metrics files to plot")

    labels = list(labels) if labels else [os.path.basename(os.path.dirname(os.path.abspath(p))) or p for p in paths]
    if len(labels) != len(paths):
        raise ValueError("{} labels for {} metrics files".format(len(labels), len(paths)))

    runs = [read_metrics(path) for path in paths]
    colors = Category10[10]

    figures = []
    for name, title in QUANTITIES:
        fig = figure(title=title, x_axis_label='Step', y_axis_label=title, width=700, height=250)
        for n, (label, rows) in enumerate(zip(labels, runs)):
            steps = [row.step for row in rows]
            values = [getattr(row, name) for row in rows]
            fig.line(steps, values, legend_label=label, color=colors[n % len(colors)], line_width=2)
        figures.append(fig)

    layout = column(*figures)
    if out:
        output_file(out, title='Training metrics')
        save(layout)
        logger.info("metrics plot saved to %s", out)

    if draw:
        show(layout)
    else:
        return layout
