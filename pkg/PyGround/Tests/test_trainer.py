import os

import pytest
import torch

from PyGround.codec import parse_boxes, parse_segments
from PyGround.config import LanguageWarmup, PipelineConfig, StagePlan, \
    profile_stages
from PyGround.encoders import MediaPayload
from PyGround.errors import (BadAlpha, MissingPreviousTerm, PlanError,
                             UnknownSet)
from PyGround.media import MediaStore
from PyGround.model import GroundingModel, load_checkpoint, \
    parameter_checksums, render_prompt
from PyGround.trainer import (StageCorpora, TrainReport, apply_freeze,
                              batch_objective, build_optimizer, lr_at,
                              mixed_objective, run_pipeline, stage_steps,
                              train_stage, warmup_steps, warmup_texts)


def stage_plan(stage, corpora, **attrs):
    settings = dict(stage=stage, current=[corpora[stage]],
                    previous=[corpora[s] for s in range(1, stage)],
                    alpha=0.0 if stage == 1 else 0.25,
                    trainable=['adapters'] if stage == 1
                    else ['adapters', 'llm'],
                    steps=2, batch_size=2, lr=1e-3, log_every=1, seed=stage)
    settings.update(attrs)
    return StagePlan(**settings)


def test_mixed_objective():
    assert mixed_objective(2.0, 4.0, 0.25) == 3.0
    assert mixed_objective(2.0, None, 0) == 2.0
    assert mixed_objective(2.0, 4.0, 0.0) == 2.0
    with pytest.raises(MissingPreviousTerm):
        mixed_objective(2.0, None, 0.25)
    with pytest.raises(BadAlpha):
        mixed_objective(2.0, 4.0, -0.5)


@pytest.mark.parametrize('alpha, expected', [(0.0, 1.5), (0.25, 2.375),
                                             (1.0, 5.0)])
def test_batch_objective(alpha, expected):
    losses = torch.tensor([1.0, 2.0, 3.0, 4.0])
    pools = ['current', 'current', 'previous', 'previous']
    loss, current, previous = batch_objective(losses, pools, alpha)
    assert float(loss) == pytest.approx(expected)
    assert float(current) == pytest.approx(1.5)
    assert float(previous) == pytest.approx(3.5)


def test_batch_objective_single_pool():
    losses = torch.tensor([1.0, 3.0])
    loss, current, previous = batch_objective(losses, ['current'] * 2, 0.25)
    assert float(loss) == pytest.approx(2.0) and previous is None
    loss, current, previous = batch_objective(losses, ['previous'] * 2, 0.25)
    assert float(loss) == pytest.approx(0.5) and current is None


def test_learning_rate_schedule():
    plan = StagePlan(lr=2e-5, warmup_ratio=0.03)
    assert warmup_steps(100, plan) == 3
    assert lr_at(51.5, 100, plan) == pytest.approx(1e-5, rel=1e-12)
    assert lr_at(1.5, 100, plan) == pytest.approx(1e-5, rel=1e-12)
    assert lr_at(3, 100, plan) == pytest.approx(2e-5)
    assert lr_at(100, 100, plan) == pytest.approx(0.0, abs=1e-20)
    constant = StagePlan(lr=2e-5, warmup_ratio=0.03, schedule='constant')
    assert lr_at(80, 100, constant) == 2e-5


def test_stage_steps():
    assert stage_steps(StagePlan(steps=7), 1000) == 7
    plan = StagePlan(stage=2, alpha=0.25, batch_size=4)
    assert stage_steps(plan, 10) == 4


def test_freeze_rejects_bad_plans(model):
    with pytest.raises(PlanError):
        apply_freeze(model, StagePlan(trainable=['encoders']))
    with pytest.raises(PlanError):
        apply_freeze(model, StagePlan(trainable=[]))
    with pytest.raises(UnknownSet):
        apply_freeze(model, StagePlan(trainable=['optimizer']))


FREEZE_CASES = [(1, ['adapters']), (2, ['adapters', 'llm']),
                (3, ['adapters', 'llm']), (3, ['llm'])]


@pytest.mark.parametrize('stage, trainable', FREEZE_CASES)
def test_one_step_changes_only_trainable_sets(model, corpora, stage,
                                              trainable):
    plan = stage_plan(stage, corpora, steps=1, trainable=trainable)
    _, report = train_stage(model, plan)
    assert len(report.loss) == report.steps == 1
    before, after = report.checksums_before, report.checksums_after
    for setName in ('encoders', 'adapters', 'llm'):
        if setName in trainable:
            assert before[setName] != after[setName]
        else:
            assert before[setName] == after[setName]


def test_alpha_zero_matches_current_only(encoder_config, lm_config, corpora):
    reports = []
    for previous in ([corpora[1]], []):
        model = GroundingModel(encoder_config, lm_config)
        plan = stage_plan(2, corpora, alpha=0.0, previous=previous)
        reports.append(train_stage(model, plan)[1])
    assert reports[0].loss == reports[1].loss
    assert reports[0].checksums_after == reports[1].checksums_after
    assert all(p is None for p in reports[0].loss_previous)


def test_training_is_deterministic(encoder_config, lm_config, corpora):
    reports = []
    for _ in range(2):
        model = GroundingModel(encoder_config, lm_config)
        reports.append(train_stage(model, stage_plan(3, corpora, steps=3))[1])
    assert reports[0].loss == reports[1].loss
    assert reports[0].checksums_after == reports[1].checksums_after


@pytest.mark.parametrize('alpha', [0.0, 0.25, 1.0])
def test_report_splits_the_loss(model, corpora, alpha):
    plan = stage_plan(2, corpora, steps=6, alpha=alpha)
    _, report = train_stage(model, plan, StageCorpora.from_plan(plan),
                            MediaStore(model.encoder_config))
    assert len(report.lr) == 6
    for total, current, previous in zip(report.loss, report.loss_current,
                                        report.loss_previous):
        if previous is None:
            assert total == pytest.approx(current, rel=1e-6)
        elif current is None:
            assert total == pytest.approx(alpha * previous, rel=1e-6)
        else:
            assert total == pytest.approx(current + alpha * previous,
                                          rel=1e-6)


def test_report_and_checkpoint_files(model, corpora, tmp_path):
    checkpoint, report = train_stage(model, stage_plan(1, corpora),
                                     outDir=tmp_path)
    assert checkpoint == os.path.join(str(tmp_path), 'stage1.pt')
    assert TrainReport.read(tmp_path / 'stage1.report.json') == report
    loaded = load_checkpoint(checkpoint)
    assert parameter_checksums(loaded) == report.checksums_after
    assert loaded.checkpoint_extra['stage'] == 1


def test_report_traces_must_align():
    with pytest.raises(ValueError):
        TrainReport(1, 2, 0.0, loss=[1.0, 2.0], lr=[0.1])


def test_pipeline(encoder_config, lm_config, corpora, tmp_path):
    stages = [plan.configure(steps=2, batch_size=2)
              for plan in profile_stages('toy', corpora)]
    config = PipelineConfig(encoder=encoder_config, llm=lm_config,
                            output_dir=str(tmp_path / 'run'),
                            language_warmup=LanguageWarmup(steps=2,
                                                           batch_size=2),
                            stages=stages)
    result = run_pipeline(config)
    assert [r.stage for r in result.reports] == [1, 2, 3]
    assert result.checkpoint == os.path.join(str(tmp_path / 'run'),
                                             'stage3.pt')
    assert os.path.isfile(result.report_path)
    encoders = set(c['encoders'] for r in result.reports
                   for c in (r.checksums_before, r.checksums_after))
    assert len(encoders) == 1
    first = result.reports[0]
    assert first.checksums_before['llm'] == first.checksums_after['llm']
    assert parameter_checksums(load_checkpoint(result.checkpoint)) == \
        parameter_checksums(result.model)


def test_warmup_reads_only_captions(corpora):
    captions = StageCorpora.from_plan(stage_plan(1, corpora))
    grounded = StageCorpora.from_plan(stage_plan(2, corpora))
    texts = warmup_texts({1: captions, 2: grounded})
    assert texts == [sample.turns for sample in captions.current]
    answers = [text for turns in texts for role, text in turns
               if role == 'assistant']
    assert answers and not any(parse_boxes(a) or parse_segments(a)
                               for a in answers)
    assert warmup_texts({2: grounded}) == []


def test_single_sample_overfits(model, rng):
    plan = StagePlan(stage=2, trainable=['adapters', 'llm'], lr=3e-3,
                     weight_decay=0.0)
    apply_freeze(model, plan)
    optimizer = build_optimizer(model, plan)
    output = model.encode(MediaPayload.image(rng.random((32, 32, 3))))
    prompt = render_prompt('where is the red square?', ['image'])
    answer = '[0.125,0.250,0.500,0.750]'
    model.train()
    losses = []
    for _ in range(200):
        sequence = model.assemble(prompt, [output], answer)
        loss = model.lm_loss(sequence)
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
        losses.append(float(loss))
    assert losses[-1] < 0.1 * losses[0]
