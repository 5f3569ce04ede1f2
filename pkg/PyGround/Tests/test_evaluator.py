import json
import os

import pytest

from PyGround.errors import MissingGroundTruth, UnlabeledProbe
from PyGround.evaluator import (AblationConfig, EvalConfig, EvalItem,
                                EvalReport, ablation_variants, eval_pope,
                                eval_rec, eval_tvg, leading_answer,
                                load_items, read_predictions)
from PyGround.worlds import gen_pope_probes, load_manifest

IMAGE = {'kind': 'image', 'ref': 'media/img'}
VIDEO = {'kind': 'video', 'ref': 'media/vid'}


def rec_fixture():
    items = [EvalItem('r%i' % i, IMAGE, 'the red square',
                      target=[0.0, 0.0, 1.0, 1.0]) for i in range(4)]
    predictions = {
        'r0': 'it is at [0.000,0.000,0.900,1.000].',
        'r1': '[0.000,0.000,0.510,1.000]',
        'r2': '[0.000,0.000,0.500,1.000] or [0.000,0.000,1.000,1.000]',
        'r3': 'no idea',
        }
    return items, predictions


def tvg_fixture():
    items = [EvalItem('t%i' % i, VIDEO, 'the blue circle', target=[0.0, 1.0])
             for i in range(3)]
    predictions = {'t0': '{0.00,0.60}', 't1': 'at {0.00,0.40}',
                   't2': '{0.20,1.00}'}
    return items, predictions


def pope_fixture(yesOnYes=40, yesOnNo=10):
    items, predictions = [], {}
    for index in range(50):
        items.append(EvalItem('y%i' % index, IMAGE, 'red square',
                              label='yes'))
        predictions['y%i' % index] = 'Yes.' if index < yesOnYes else 'No.'
        items.append(EvalItem('n%i' % index, IMAGE, 'blue circle',
                              label='no'))
        predictions['n%i' % index] = 'yes' if index < yesOnNo else 'no'
    return items, predictions


def test_rec_accuracy():
    items, predictions = rec_fixture()
    report = eval_rec(predictions, items)
    assert report.metrics['rec_accuracy'] == 0.5
    assert report.metrics['mean_iou'] == pytest.approx((0.9 + 0.51 + 0.5) / 4)
    assert [r.verdict for r in report.items] == [True, True, False, False]
    assert report.items[3].parsed is None and report.items[3].iou == 0.0
    assert report.items[2].parsed == [0.0, 0.0, 0.5, 1.0]


def test_tvg_recall():
    items, predictions = tvg_fixture()
    report = eval_tvg(predictions, items)
    assert report.metrics['r_at_1'] == {'0.5': 2 / 3, '0.7': 1 / 3}
    assert report.metrics['mean_iou'] == pytest.approx(0.6)


def test_pope_metrics():
    items, predictions = pope_fixture()
    report = eval_pope(predictions, items)
    assert report.metrics['pope'] == {'accuracy': 0.8, 'f1': 0.8,
                                      'yes_rate': 0.5}
    assert report.metrics['counts'] == {'tp': 40, 'fp': 10, 'fn': 10,
                                        'tn': 40}


def test_pope_all_yes_baseline():
    items, predictions = pope_fixture(yesOnYes=50, yesOnNo=50)
    metrics = eval_pope(predictions, items).metrics['pope']
    assert metrics['f1'] == 2 / 3
    assert metrics['accuracy'] == 0.5
    assert metrics['yes_rate'] == 1.0


def test_pope_other_answers_are_not_negatives():
    items = [EvalItem('n', IMAGE, 'blue circle', label='no')]
    report = eval_pope({'n': 'maybe'}, items)
    assert report.metrics['counts'] == {'tp': 0, 'fp': 0, 'fn': 0, 'tn': 0}
    assert report.metrics['pope']['f1'] == 0.0


def test_leading_answer():
    assert leading_answer('Yes, there is a red square.') == 'yes'
    assert leading_answer('  no') == 'no'
    assert leading_answer('There is no square.') == 'other'
    assert leading_answer('') == 'other'


def test_missing_labels_and_targets():
    with pytest.raises(UnlabeledProbe):
        eval_pope({'p': 'yes'}, [EvalItem('p', IMAGE, 'red square')])
    with pytest.raises(MissingGroundTruth):
        eval_rec({'r': '[0.000,0.000,1.000,1.000]'},
                 [EvalItem('r', IMAGE, 'the red square')])
    with pytest.raises(ValueError):
        eval_tvg({}, [])


def test_missing_prediction_scores_zero():
    items, predictions = rec_fixture()
    del predictions['r0']
    report = eval_rec(predictions, items)
    assert report.items[0].prediction == ''
    assert report.metrics['rec_accuracy'] == 0.25


def test_metrics_ignore_item_order():
    items, predictions = rec_fixture()
    forward = eval_rec(predictions, items).metrics
    backward = eval_rec(predictions, items[::-1]).metrics
    assert forward == backward


def test_report_round_trip(tmp_path):
    items, predictions = tvg_fixture()
    report = eval_tvg(predictions, items, split='fixture')
    written = report.write(tmp_path / 'tvg.json')
    assert [os.path.basename(p) for p in written] == ['tvg.json', 'tvg.txt']
    again = EvalReport.read(tmp_path / 'tvg.json')
    assert again.consistent()
    assert again.metrics == report.metrics
    assert 'r_at_1 0.5' in (tmp_path / 'tvg.txt').read_text()


def test_threshold_curve_is_monotone():
    items, predictions = rec_fixture()
    report = eval_rec(predictions, items)
    curve = report.curve(EvalConfig().curve_thresholds())
    values = [value for _, value in curve]
    assert values == sorted(values, reverse=True)
    assert dict(curve)[0.5] == report.metrics['rec_accuracy']


def test_predictions_file(tmp_path):
    items, predictions = rec_fixture()
    path = tmp_path / 'predictions.jsonl'
    path.write_text(''.join(json.dumps({'id': k, 'text': v}) + '\n'
                            for k, v in predictions.items()))
    assert read_predictions(path) == predictions
    assert eval_rec(str(path), items).metrics['rec_accuracy'] == 0.5
    broken = tmp_path / 'broken.jsonl'
    broken.write_text('{"id": "r0"}\n')
    with pytest.raises(ValueError):
        read_predictions(broken)


def test_eval_config():
    config = EvalConfig()
    assert config.prompt('rec', 'the red square') == \
        'Output the coordinate of the red square.'
    assert config.prompt('pope', 'red square') == \
        'Is there a red square in the image?'
    assert config.tvg_thresholds == [0.5, 0.7]
    with pytest.raises(ValueError):
        EvalConfig(tvg_thresholds=[0.5, 1.5])
    with pytest.raises(ValueError):
        EvalConfig(decoding='beam')


def test_world_items(worlds):
    items = load_items('tvg', worlds['video'])
    assert items and all(item.target is not None for item in items)
    assert all(os.path.isabs(item.media['ref']) for item in items)
    oracle = dict((item.id, '{%.2f,%.2f}' % tuple(item.target))
                  for item in items)
    assert eval_tvg(oracle, worlds['video']).metrics['r_at_1']['0.7'] == 1.0


def test_model_predictions(model, worlds):
    config = EvalConfig(max_new_tokens=4)
    report = eval_rec(model, worlds['image'], config)
    assert report.n == len(load_items('rec', worlds['image']))
    assert report.consistent()
    assert 0.0 <= report.metrics['rec_accuracy'] <= 1.0
    probes = gen_pope_probes(load_manifest(worlds['image']), 'random', 0)
    pope = eval_pope(model, probes, config, worldDir=worlds['image'])
    assert pope.n == len(probes)


def test_ablation_setup():
    variants = ablation_variants()
    assert set(variants) == {'C then F', 'C+F in stage 1'}
    coarse = variants['C then F'][1]
    mixed = variants['C+F in stage 1'][1]
    assert set(coarse) < set(mixed)
    assert 'rec' in mixed and 'rec' not in coarse
    with pytest.raises(ValueError):
        AblationConfig(seeds=[0, 1, 2, 3])
    with pytest.raises(ValueError):
        AblationConfig(seeds=[0, 1, 2, 3, 3])
