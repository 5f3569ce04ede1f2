"""Stage plans and pipeline configuration files.

A configuration file is YAML::

    version: 1
    profile: toy            # or full
    seed: 0
    output_dir: runs/toy
    model:
      encoder: {...}        # EncoderConfig keys
      llm: {...}            # LanguageModelConfig keys
    language_warmup: {...}  # LanguageWarmup keys
    stages:
      - {stage: 1, current: [corpora/stage1.jsonl], ...}   # StagePlan keys

Keys that no object declares are an error.  Every validation failure is
raised as PlanError so callers can tell configuration problems apart from
runtime failures.
"""
import logging
import os

import yaml

from PyGround.base import GroundObject
from PyGround.encoders import EncoderConfig
from PyGround.errors import BadAlpha, PlanError, UnknownSet
from PyGround.model import LanguageModelConfig, PARAMETER_SETS

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1
PROFILES = ('toy', 'full')
SCHEDULES = ('cosine', 'constant')
OUTPUT_ROOT_VARIABLE = 'PYGROUND_OUTPUT_ROOT'


class StagePlan(GroundObject):
    """Everything one training stage needs.

    current and previous are corpus paths; previous corpora are pooled and
    sampled with rate alpha.  steps = 0 means one pass over the data per
    epoch, counted as len(current) * (1 + alpha) draws."""
    def __init__(self,
                 stage=1,
                 trainable=('adapters',),
                 current=(),
                 previous=(),
                 alpha=0.0,
                 lr=1e-3,
                 warmup_ratio=0.03,
                 schedule='cosine',
                 epochs=1,
                 steps=0,
                 batch_size=16,
                 grad_accumulation=1,
                 weight_decay=0.0,
                 beta1=0.9,
                 beta2=0.999,
                 eps=1e-8,
                 max_grad_norm=1.0,
                 log_every=25,
                 seed=0,
                 ):
        GroundObject.__init__(self, locals())

    def __setattr__(self, key, value):

        # check StagePlan specific attributes
        if key == 'stage':
            self._check_type(int, key, value)
            self._check_membership(key, value, (1, 2, 3))
        elif key in ('trainable', 'current', 'previous'):
            self._check_type((list, tuple), key, value)
            for item in value:
                self._check_type(str, key, item)
            value = list(value)
        elif key == 'alpha':
            self._check_type((float, int), key, value)
            if value < 0:
                raise BadAlpha('alpha = %r must be >= 0' % value)
            value = float(value)
        elif key in ('lr', 'weight_decay', 'max_grad_norm'):
            self._check_type((float, int), key, value)
            self._check_range(key, value, 0, None)
        elif key in ('beta1', 'beta2'):
            self._check_type((float, int), key, value)
            self._check_range(key, value, 0, 1, includeMax=False)
        elif key == 'eps':
            self._check_type((float, int), key, value)
            self._check_range(key, value, 0, None, includeMin=False)
        elif key == 'schedule':
            self._check_type(str, key, value)
            self._check_membership(key, value, SCHEDULES)
        elif key in ('epochs', 'batch_size', 'grad_accumulation', 'log_every'):
            self._check_type(int, key, value)
            self._check_range(key, value, 1, None)
        elif key == 'steps':
            self._check_type(int, key, value)
            self._check_range(key, value, 0, None)

        GroundObject.__setattr__(self, key, value)

    def validate(self):
        """Cross-field rules; raises PlanError (UnknownSet for set names
        that do not exist)."""
        for name in self.trainable:
            if name not in PARAMETER_SETS:
                raise UnknownSet('unknown parameter set: %s' % name)
        if not self.trainable:
            raise PlanError('stage %i trains nothing' % self.stage)
        if 'encoders' in self.trainable:
            raise PlanError('the modality encoders are never trained '
                            '(stage %i)' % self.stage)
        if self.stage == 1 and self.alpha != 0:
            message = 'stage 1 has no previous stage, so alpha must be 0 ' \
                      '(got %r)' % self.alpha
            raise PlanError(message)
        if self.alpha > 0 and not self.previous:
            message = 'stage %i samples previous data with alpha = %r but ' \
                      'lists no previous corpora' % (self.stage, self.alpha)
            raise PlanError(message)
        return self


class LanguageWarmup(GroundObject):
    """Text-only training of the language model before stage 1.

    It gives the character-level model the language prior that a released
    LLM brings with it; steps = 0 skips it."""
    def __init__(self,
                 steps=0,
                 lr=1e-3,
                 batch_size=16,
                 seed=0,
                 ):
        GroundObject.__init__(self, locals())

    def __setattr__(self, key, value):

        # check LanguageWarmup specific attributes
        if key in ('steps',):
            self._check_type(int, key, value)
            self._check_range(key, value, 0, None)
        elif key == 'batch_size':
            self._check_type(int, key, value)
            self._check_range(key, value, 1, None)
        elif key == 'lr':
            self._check_type((float, int), key, value)
            self._check_range(key, value, 0, None)

        GroundObject.__setattr__(self, key, value)


class PipelineConfig(GroundObject):
    """A complete three-stage run."""
    def __init__(self,
                 version=CONFIG_VERSION,
                 profile='toy',
                 seed=0,
                 output_dir='runs/toy',
                 encoder=None,
                 llm=None,
                 language_warmup=None,
                 stages=(),
                 ):
        GroundObject.__init__(self, locals())

    def __setattr__(self, key, value):

        # check PipelineConfig specific attributes
        if key == 'version':
            self._check_type(int, key, value)
            self._check_membership(key, value, (CONFIG_VERSION,))
        elif key == 'profile':
            self._check_type(str, key, value)
            self._check_membership(key, value, PROFILES)
        elif key == 'output_dir':
            self._check_type(str, key, value)
        elif key == 'encoder':
            value = value if value is not None else EncoderConfig()
            self._check_type(EncoderConfig, key, value)
        elif key == 'llm':
            value = value if value is not None else LanguageModelConfig()
            self._check_type(LanguageModelConfig, key, value)
        elif key == 'language_warmup':
            value = value if value is not None else LanguageWarmup()
            self._check_type(LanguageWarmup, key, value)
        elif key == 'stages':
            self._check_type((list, tuple), key, value)
            for plan in value:
                self._check_type(StagePlan, key, plan)
            value = list(value)

        GroundObject.__setattr__(self, key, value)

    def plan(self, stage) -> StagePlan:
        for plan in self.stages:
            if plan.stage == stage:
                return plan
        raise PlanError('the configuration has no stage %i' % stage)

    def validate(self):
        stages = [plan.stage for plan in self.stages]
        if stages != sorted(set(stages)):
            message = 'stages must be listed once each in order ' \
                      '(got %s)' % stages
            raise PlanError(message)
        for plan in self.stages:
            plan.validate()
        try:
            self.encoder.validate()
        except ValueError as error:
            raise PlanError(str(error))
        return self

    def as_dict(self):
        return {
            'version': self.version,
            'profile': self.profile,
            'seed': self.seed,
            'output_dir': self.output_dir,
            'model': {
                'encoder': self.encoder.as_dict(),
                'llm': self.llm.as_dict(),
                },
            'language_warmup': self.language_warmup.as_dict(),
            'stages': [plan.as_dict() for plan in self.stages],
            }

    @classmethod
    def from_dict(cls, attrs):
        """Build and validate a configuration from a parsed file."""
        attrs = dict(attrs or {})
        try:
            model = dict(attrs.pop('model', None) or {})
            encoder = EncoderConfig.from_dict(model.pop('encoder', None))
            llm = LanguageModelConfig.from_dict(model.pop('llm', None))
            if model:
                raise KeyError('unknown model keys: %s'
                               % ', '.join(sorted(model)))
            warmup = LanguageWarmup.from_dict(attrs.pop('language_warmup',
                                                        None))
            stages = [StagePlan.from_dict(plan)
                      for plan in attrs.pop('stages', None) or []]
            config = cls(encoder=encoder, llm=llm, language_warmup=warmup,
                         stages=stages)
            unknown = sorted(set(attrs) - set(config._defaultAttributes))
            if unknown:
                raise KeyError('unknown configuration keys: %s'
                               % ', '.join(unknown))
            config.configure(**attrs)
        except PlanError:
            raise
        except (KeyError, TypeError, ValueError) as error:
            message = error.args[0] if error.args else str(error)
            raise PlanError('invalid configuration: %s' % message)
        return config.validate()


def profile_stages(profile: str, corpora, alpha=0.25, seed=0):
    """Stage plans of a built-in profile.

    corpora maps stage -> corpus path.  The full profile carries the
    full-scale hyper-parameters; the toy profile keeps their shape
    (stage 1 faster than stages 2-3, cosine decay, short warm-up) at a size
    a CPU finishes in minutes."""
    if profile not in PROFILES:
        raise PlanError('profile %s is not in %s' % (profile, PROFILES))
    if profile == 'full':
        settings = {
            1: dict(batch_size=64, lr=1e-3, grad_accumulation=1),
            2: dict(batch_size=16, lr=2e-5, grad_accumulation=2),
            3: dict(batch_size=8, lr=2e-5, grad_accumulation=2),
            }
    else:
        settings = {
            1: dict(batch_size=16, lr=3e-3, steps=300),
            2: dict(batch_size=16, lr=1e-3, steps=900),
            3: dict(batch_size=16, lr=5e-4, steps=300),
            }
    plans = []
    for stage in (1, 2, 3):
        plan = StagePlan(stage=stage, seed=seed + stage,
                         current=[str(corpora[stage])],
                         previous=[str(corpora[s]) for s in range(1, stage)],
                         alpha=0.0 if stage == 1 else alpha,
                         trainable=['adapters'] if stage == 1
                         else ['adapters', 'llm'],
                         warmup_ratio=0.03, schedule='cosine', epochs=1,
                         weight_decay=0.0)
        plans.append(plan.configure(**settings[stage]))
    return plans


def default_config(profile='toy', corpora=None, seed=0, outputDir=None,
                   alpha=0.25) -> PipelineConfig:
    corpora = corpora or dict((s, 'corpora/stage%i.jsonl' % s)
                              for s in (1, 2, 3))
    warmup = LanguageWarmup(steps=400 if profile == 'toy' else 0, seed=seed)
    config = PipelineConfig(profile=profile, seed=seed,
                            output_dir=outputDir or default_output_dir(profile),
                            language_warmup=warmup,
                            stages=profile_stages(profile, corpora, alpha,
                                                  seed))
    return config.validate()


def default_output_dir(name) -> str:
    return os.path.join(os.environ.get(OUTPUT_ROOT_VARIABLE, 'runs'), name)


def load_config(path) -> PipelineConfig:
    """Read a YAML configuration; relative corpus paths are resolved against
    the file's directory."""
    with open(path, encoding='utf-8') as inStream:
        try:
            attrs = yaml.safe_load(inStream)
        except yaml.YAMLError as error:
            raise PlanError('%s is not valid YAML: %s' % (path, error))
    if not isinstance(attrs, dict):
        raise PlanError('%s does not hold a mapping' % path)
    if 'version' not in attrs:
        raise PlanError('%s has no version key' % path)
    config = PipelineConfig.from_dict(attrs)
    base = os.path.dirname(os.path.abspath(str(path)))
    for plan in config.stages:
        plan.current = [_resolve(base, p) for p in plan.current]
        plan.previous = [_resolve(base, p) for p in plan.previous]
    logger.info('loaded %s configuration with %i stage(s) from %s',
                config.profile, len(config.stages), path)
    return config


def _resolve(base, path):
    return path if os.path.isabs(path) else os.path.normpath(
        os.path.join(base, path))


def dump_config(config: PipelineConfig, path) -> str:
    with open(path, 'w', encoding='utf-8') as outStream:
        yaml.safe_dump(config.as_dict(), outStream, sort_keys=False)
    return str(path)
