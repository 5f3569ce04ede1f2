"""Three-stage coarse-to-fine training.

Each stage trains only its plan's parameter sets.  A batch is drawn from
the mixed sampler; items carry the pool they came from, and the batch loss
is the mean loss of the current items plus alpha times the mean loss of
the previous-stage items.
"""
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch
from tqdm import tqdm

from PyGround.config import LanguageWarmup, PipelineConfig, StagePlan
from PyGround.dataset import (ConversationSample, TaggedItem, load_corpus,
                              mixed_sampler)
from PyGround.errors import (BadAlpha, MissingPreviousTerm, NonFiniteLoss,
                             PlanError, UnknownSet)
from PyGround.media import MediaStore
from PyGround.model import (GroundingModel, PARAMETER_SETS, load_checkpoint,
                            parameter_checksums, parameter_sets,
                            save_checkpoint)

logger = logging.getLogger(__name__)


@dataclass
class TrainReport:
    stage: int
    steps: int
    alpha: float
    loss: List[float] = field(default_factory=list)
    loss_current: List[Optional[float]] = field(default_factory=list)
    loss_previous: List[Optional[float]] = field(default_factory=list)
    lr: List[float] = field(default_factory=list)
    checksums_before: Dict[str, str] = field(default_factory=dict)
    checksums_after: Dict[str, str] = field(default_factory=dict)
    wall_time: float = 0.0
    plan: dict = field(default_factory=dict)
    checkpoint: Optional[str] = None

    def __post_init__(self):
        self.check_traces()

    def check_traces(self):
        lengths = set(len(trace) for trace in (self.loss, self.loss_current,
                                               self.loss_previous, self.lr))
        if len(lengths) > 1:
            raise ValueError('report traces have different lengths %s'
                             % sorted(lengths))

    def mean_loss(self, start, stop) -> float:
        return float(np.mean(self.loss[start:stop]))

    def as_dict(self):
        return asdict(self)

    def write(self, path) -> str:
        self.check_traces()
        with open(path, 'w', encoding='utf-8') as outStream:
            json.dump(self.as_dict(), outStream, indent=2, sort_keys=True)
            outStream.write('\n')
        return str(path)

    @classmethod
    def read(cls, path) -> 'TrainReport':
        with open(path, encoding='utf-8') as inStream:
            return cls(**json.load(inStream))


@dataclass
class StageCorpora:
    current: List[ConversationSample]
    previous: List[List[ConversationSample]] = field(default_factory=list)

    @classmethod
    def from_plan(cls, plan: StagePlan) -> 'StageCorpora':
        current = []
        for path in plan.current:
            current.extend(load_corpus(path))
        return cls(current, [load_corpus(path) for path in plan.previous])


@dataclass
class PipelineResult:
    model: GroundingModel
    checkpoint: Optional[str]
    reports: List[TrainReport]
    report_path: Optional[str] = None


# -------------------------------------------------------------------------
# objective and schedule
# -------------------------------------------------------------------------
def mixed_objective(lossCurrent, lossPrevious, alpha):
    """lossCurrent + alpha * lossPrevious.

    With alpha = 0 the previous term may be absent (and is ignored when
    given)."""
    if alpha < 0:
        raise BadAlpha('alpha = %r must be >= 0' % alpha)
    if alpha == 0:
        return lossCurrent
    if lossPrevious is None:
        message = 'alpha = %r needs a previous-stage loss term' % alpha
        raise MissingPreviousTerm(message)
    return lossCurrent + alpha * lossPrevious


def batch_objective(losses: torch.Tensor, pools: Sequence[str], alpha):
    """Loss of one tagged batch and its two pool means (None when the pool
    has no item in the batch).  A batch without previous items is its
    current mean; a batch without current items is alpha times its previous
    mean."""
    currentRows = [i for i, pool in enumerate(pools) if pool == 'current']
    previousRows = [i for i, pool in enumerate(pools) if pool == 'previous']
    current = losses[currentRows].mean() if currentRows else None
    previous = losses[previousRows].mean() if previousRows else None
    if previous is None:
        return current, current, None
    if current is None:
        return alpha * previous, None, previous
    return mixed_objective(current, previous, alpha), current, previous


def warmup_steps(totalSteps, plan) -> int:
    return int(math.ceil(plan.warmup_ratio * totalSteps))


def lr_at(step, totalSteps, plan) -> float:
    """Linear warm-up to plan.lr over ceil(warmup_ratio * totalSteps) steps,
    then cosine decay to 0 at totalSteps (or a flat plan.lr for the constant
    schedule).  step may be fractional."""
    if totalSteps <= 0:
        return 0.0
    step = min(max(step, 0.0), float(totalSteps))
    warm = warmup_steps(totalSteps, plan)
    if step < warm:
        return plan.lr * step / warm
    if plan.schedule == 'constant':
        return plan.lr
    if totalSteps == warm:
        return 0.0
    progress = (step - warm) / float(totalSteps - warm)
    return plan.lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def stage_steps(plan: StagePlan, currentSize: int) -> int:
    """plan.steps, or one pass per epoch over current plus sampled previous
    data."""
    if plan.steps:
        return plan.steps
    draws = currentSize * (1.0 + plan.alpha) * plan.epochs
    return max(1, int(math.ceil(draws / (plan.batch_size *
                                         plan.grad_accumulation))))


# -------------------------------------------------------------------------
# freezing
# -------------------------------------------------------------------------
def apply_freeze(model: GroundingModel, plan: StagePlan) -> GroundingModel:
    """requires_grad on exactly the plan's trainable sets."""
    trainable = list(plan.trainable)
    for name in trainable:
        if name not in PARAMETER_SETS:
            raise UnknownSet('unknown parameter set: %s' % name)
    if not trainable:
        raise PlanError('stage %i trains nothing' % plan.stage)
    if 'encoders' in trainable:
        raise PlanError('the modality encoders are never trained')
    for setName, params in parameter_sets(model).items():
        for parameter in params.values():
            parameter.requires_grad_(setName in trainable)
    return model


def trainable_parameters(model: GroundingModel) -> List[torch.nn.Parameter]:
    return [p for _, p in sorted(model.named_parameters())
            if p.requires_grad]


def build_optimizer(model, plan: StagePlan):
    return torch.optim.AdamW(trainable_parameters(model), lr=plan.lr,
                             betas=(plan.beta1, plan.beta2), eps=plan.eps,
                             weight_decay=plan.weight_decay)


# -------------------------------------------------------------------------
# training loops
# -------------------------------------------------------------------------
def sample_sequence(model, store: MediaStore, sample: ConversationSample):
    return model.assemble_conversation(sample.turns,
                                       store.encoder_outputs(model,
                                                             sample.media))


def batch_losses(model, store: MediaStore, batch: Sequence[TaggedItem]):
    """Per-item losses and pool tags of a tagged batch."""
    sequences = [sample_sequence(model, store, tagged.item)
                 for tagged in batch]
    return model.sequence_losses(sequences), [t.pool for t in batch]


def train_stage(model: GroundingModel, plan: StagePlan,
                corpora: Optional[StageCorpora] = None,
                store: Optional[MediaStore] = None, outDir=None,
                progress=False):
    """Run one stage; returns (checkpoint path or None, TrainReport)."""
    plan.validate()
    corpora = corpora or StageCorpora.from_plan(plan)
    store = store or MediaStore(model.encoder_config)
    apply_freeze(model, plan)
    model.train()
    optimizer = build_optimizer(model, plan)
    totalSteps = stage_steps(plan, len(corpora.current))
    rng = np.random.default_rng(plan.seed)
    stream = mixed_sampler(corpora.current, corpora.previous, plan.alpha, rng)
    torch.manual_seed(plan.seed)

    report = TrainReport(plan.stage, totalSteps, plan.alpha,
                         checksums_before=parameter_checksums(model),
                         plan=plan.as_dict())
    logger.info('stage %i: %i steps over %i current and %i previous samples '
                '(alpha %g, training %s)', plan.stage, totalSteps,
                len(corpora.current), sum(len(c) for c in corpora.previous),
                plan.alpha, ', '.join(plan.trainable))
    started = time.time()
    for step in tqdm(range(totalSteps), desc='stage %i' % plan.stage,
                     disable=not progress):
        rate = lr_at(step + 0.5, totalSteps, plan)
        for group in optimizer.param_groups:
            group['lr'] = rate
        optimizer.zero_grad(set_to_none=True)
        total, currentTerms, previousTerms = 0.0, [], []
        for _ in range(plan.grad_accumulation):
            batch = [next(stream) for _ in range(plan.batch_size)]
            losses, pools = batch_losses(model, store, batch)
            loss, current, previous = batch_objective(losses, pools,
                                                      plan.alpha)
            value = float(loss)
            if not math.isfinite(value):
                raise NonFiniteLoss(step, value)
            (loss / plan.grad_accumulation).backward()
            total += value / plan.grad_accumulation
            if current is not None:
                currentTerms.append(float(current))
            if previous is not None:
                previousTerms.append(float(previous))
        if plan.max_grad_norm > 0:
            torch.nn.utils.clip_grad_norm_(trainable_parameters(model),
                                           plan.max_grad_norm)
        optimizer.step()

        report.loss.append(total)
        report.loss_current.append(
            float(np.mean(currentTerms)) if currentTerms else None)
        report.loss_previous.append(
            float(np.mean(previousTerms)) if previousTerms else None)
        report.lr.append(rate)
        if (step + 1) % plan.log_every == 0 or step + 1 == totalSteps:
            window = report.loss[-plan.log_every:]
            logger.info('stage %i step %i/%i loss %.4f lr %.3g', plan.stage,
                        step + 1, totalSteps, float(np.mean(window)), rate)

    report.wall_time = time.time() - started
    report.checksums_after = parameter_checksums(model)
    checkpoint = None
    if outDir is not None:
        os.makedirs(str(outDir), exist_ok=True)
        checkpoint = os.path.join(str(outDir), 'stage%i.pt' % plan.stage)
        report.checkpoint = checkpoint
        save_checkpoint(model, checkpoint, extra={'stage': plan.stage,
                                                  'plan': plan.as_dict()})
        report.write(os.path.join(str(outDir),
                                  'stage%i.report.json' % plan.stage))
    return checkpoint, report


def warmup_texts(corpora) -> List[list]:
    """Conversation turns of the stage-1 caption corpus; the grounding
    stages never reach the text-only warm-up."""
    if 1 not in corpora:
        return []
    return [sample.turns for sample in corpora[1].current]


def warm_up_language_model(model: GroundingModel, texts: Sequence[list],
                           warmup: LanguageWarmup, progress=False):
    """Text-only next-token training of the llm set on conversation turns;
    returns the loss trace."""
    trace = []
    if warmup.steps == 0 or not texts:
        return trace
    for setName, params in parameter_sets(model).items():
        for parameter in params.values():
            parameter.requires_grad_(setName == 'llm')
    model.train()
    optimizer = torch.optim.AdamW(trainable_parameters(model), lr=warmup.lr,
                                  weight_decay=0.0)
    rng = np.random.default_rng(warmup.seed)
    torch.manual_seed(warmup.seed)
    for step in tqdm(range(warmup.steps), desc='language warm-up',
                     disable=not progress):
        for group in optimizer.param_groups:
            group['lr'] = warmup.lr * 0.5 * (
                1.0 + math.cos(math.pi * (step + 0.5) / warmup.steps))
        picks = rng.integers(len(texts), size=warmup.batch_size)
        sequences = [model.assemble_conversation(texts[int(i)], [])
                     for i in picks]
        loss = model.sequence_losses(sequences).mean()
        if not math.isfinite(float(loss)):
            raise NonFiniteLoss(step, float(loss))
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
        trace.append(float(loss))
    logger.info('language warm-up: %i steps, loss %.4f -> %.4f',
                warmup.steps, trace[0], float(np.mean(trace[-10:])))
    return trace


def run_pipeline(config: PipelineConfig, outDir=None, progress=False,
                 store: Optional[MediaStore] = None) -> PipelineResult:
    """Stages in order, each starting from the previous stage's checkpoint;
    writes stage checkpoints, stage reports and pipeline.report.json."""
    config.validate()
    outDir = outDir or config.output_dir
    os.makedirs(str(outDir), exist_ok=True)
    store = store or MediaStore(config.encoder)
    model = GroundingModel(config.encoder, config.llm)

    corpora = dict((plan.stage, StageCorpora.from_plan(plan))
                   for plan in config.stages)
    warmupTrace = warm_up_language_model(model, warmup_texts(corpora),
                                         config.language_warmup, progress)

    reports = []
    checkpoint = None
    for plan in config.stages:
        if checkpoint is not None:
            model = load_checkpoint(checkpoint)
        checkpoint, report = train_stage(model, plan, corpora[plan.stage],
                                         store, outDir, progress)
        reports.append(report)

    reportPath = os.path.join(str(outDir), 'pipeline.report.json')
    with open(reportPath, 'w', encoding='utf-8') as outStream:
        json.dump({
            'config': config.as_dict(),
            'language_warmup': warmupTrace,
            'stages': [r.as_dict() for r in reports],
            'checkpoint': checkpoint,
            }, outStream, indent=2, sort_keys=True)
        outStream.write('\n')
    logger.info('pipeline finished: %s', checkpoint)
    return PipelineResult(model, checkpoint, reports, reportPath)
