import os

import pytest

from PyGround.Extensions.curves import (plot_reports, plot_seed_comparison,
                                        plot_threshold_curves, running_mean)
from PyGround.Plotting.grace import Grace
from PyGround.Plotting.graph import nice_step
from PyGround.trainer import TrainReport


def make_report(stage, alpha, steps):
    loss = [2.0 - 0.01 * i for i in range(steps)]
    if alpha > 0:
        current = [value + 0.1 for value in loss]
        previous = [value - 0.1 if i % 2 else None
                    for i, value in enumerate(loss)]
    else:
        current = list(loss)
        previous = [None] * steps
    return TrainReport(stage, steps, alpha, loss, current, previous,
                       [1e-3] * steps)


def test_running_mean():
    data = [(0, 1.0), (1, 2.0), (2, 3.0), (3, 4.0)]
    assert running_mean(data, 2) == [(1, 1.5), (2, 2.5), (3, 3.5)]
    assert running_mean(data, 4) == [(3, 2.5)]
    assert running_mean(data, 5) == []


def test_nice_step():
    assert nice_step(10) == 2
    assert nice_step(0.7) == pytest.approx(0.2)
    assert nice_step(0) == 1.0


def test_plot_reports(tmp_path):
    reports = [make_report(1, 0.0, 30), make_report(2, 0.25, 30)]
    written = plot_reports(reports, str(tmp_path / 'plots' / 'loss'))
    assert written.endswith('loss.agr')
    assert os.path.exists(written)
    with open(written) as inStream:
        text = inStream.read()
    assert '@g0 on' in text and '@g1 on' in text
    # stage 1: loss and running mean; stage 2 adds both pool terms
    assert '@target G0.S1' in text and '@target G0.S2' not in text
    assert '@target G1.S3' in text
    assert 'stage 2 (alpha 0.25)' in text


def test_plot_threshold_curves(tmp_path):
    curves = {'mlp': [(0.25, 0.9), (0.5, 0.7), (0.75, 0.3)],
              'linear': [(0.25, 0.8), (0.5, 0.5), (0.75, 0.1)]}
    written = plot_threshold_curves(curves, str(tmp_path / 'curves.agr'))
    assert written == str(tmp_path / 'curves.agr')
    with open(written) as inStream:
        text = inStream.read()
    assert '@target G0.S1' in text
    assert '0.5 0.7' in text and '0.75 0.1' in text
    assert 'legend "linear"' in text


def test_plot_seed_comparison(tmp_path):
    summary = {'coarse': (0.5, 0.1), 'mixed': (0.7, 0.05)}
    written = plot_seed_comparison(summary, str(tmp_path / 'seeds'))
    with open(written) as inStream:
        text = inStream.read()
    assert '@type xydy' in text
    assert '2.0 0.7 0.05' in text


def test_legend_quote():
    grace = Grace()
    graph = grace.add_graph()
    with pytest.raises(ValueError):
        graph.add_dataset([(0, 1)], legend='say "hi"')
    with pytest.raises(TypeError):
        grace.add_graph(dict)
