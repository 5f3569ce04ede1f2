"""pg_ground: one entry point for worlds, corpora, training, evaluation,
inference and the coarse-to-fine ablation.

Exit codes: 0 on success, 2 on usage or validation errors, 1 on any other
PyGround or file-system error.
"""
import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

import PyGround
from PyGround.codec import parse_boxes, parse_segments
from PyGround.config import default_output_dir, load_config
from PyGround.dataset import STAGE_TASKS, build_stage_corpus
from PyGround.errors import GroundError, PlanError, UnknownSet
from PyGround.evaluator import (AblationConfig, EvalConfig,
                                ablation_coarse_to_fine, eval_pope, eval_rec,
                                eval_tvg, load_model, read_predictions)
from PyGround.Extensions.curves import (plot_reports, plot_seed_comparison,
                                        plot_threshold_curves)
from PyGround.media import MediaStore
from PyGround.model import GroundingModel, render_prompt
from PyGround.recipes import ToySizes, toy_pipeline
from PyGround.templates import TemplateBank
from PyGround.trainer import run_pipeline, train_stage
from PyGround.worlds import (POPE_STRATEGIES, WORLD_KINDS, gen_pope_probes,
                             gen_world, load_manifest)

logger = logging.getLogger('pg_ground')

MANIFEST_NAME = 'run_manifest.json'
LOG_FORMAT = '%(asctime)s %(name)s %(levelname)s: %(message)s'
LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)


@dataclass
class RunManifest:
    """What a command did and every artifact it wrote."""
    command: str
    argv: List[str]
    output_dir: str
    config: Optional[str] = None
    seed: Optional[int] = None
    version: str = PyGround.__version__
    started: float = field(default_factory=time.time)
    finished: Optional[float] = None
    artifacts: List[str] = field(default_factory=list)

    def add(self, *paths):
        for path in paths:
            if path is None:
                continue
            path = os.path.abspath(str(path))
            try:
                relative = os.path.relpath(path, os.path.abspath(
                    self.output_dir))
            except ValueError:
                relative = path
            name = path if relative.startswith('..') else relative
            if name not in self.artifacts:
                self.artifacts.append(name)

    def write(self) -> str:
        self.finished = time.time()
        os.makedirs(self.output_dir, exist_ok=True)
        path = os.path.join(self.output_dir, MANIFEST_NAME)
        with open(path, 'w', encoding='utf-8') as outStream:
            json.dump(asdict(self), outStream, indent=2, sort_keys=True)
            outStream.write('\n')
        return path


class GroundParser(argparse.ArgumentParser):
    """argparse parser with the pg_ground commands and the shared logging
    options."""
    def __init__(self, *args, **kwargs):
        kwargs.setdefault('prog', 'pg_ground')
        kwargs.setdefault('description', __doc__.split('\n\n')[0])
        argparse.ArgumentParser.__init__(self, *args, **kwargs)

        # shared options
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument('-v', '--verbose', action='count', default=0,
                            help='-v for progress messages, -vv for debug')
        common.add_argument('--log-file', dest='log_file',
                            help='also write log messages to this file')

        commands = self.add_subparsers(dest='command', metavar='COMMAND',
                                       parser_class=argparse.ArgumentParser)
        commands.required = True

        # gen
        parser = commands.add_parser('gen', parents=[common],
                                     help='generate a synthetic world')
        parser.add_argument('--world', choices=WORLD_KINDS, required=True)
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--n', type=int, required=True)
        parser.add_argument('--out', required=True)
        parser.set_defaults(run=cmd_gen)

        # build
        parser = commands.add_parser('build', parents=[common],
                                     help='build one stage corpus')
        parser.add_argument('--stage', type=int, choices=(1, 2, 3),
                            required=True)
        parser.add_argument('--source', action='append', required=True,
                            help='world directory or annotations file '
                                 '(repeatable)')
        parser.add_argument('--out', required=True,
                            help='corpus JSONL path')
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--tasks', nargs='+',
                            help='override the stage task set')
        parser.add_argument('--templates',
                            help='JSON file of extra templates per task')
        parser.set_defaults(run=cmd_build)

        # prepare
        parser = commands.add_parser('prepare', parents=[common],
                                     help='toy worlds, corpora and config')
        parser.add_argument('--out', required=True)
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--alpha', type=float, default=0.25)
        parser.add_argument('--adapter', choices=('mlp2x_gelu', 'linear'),
                            default='mlp2x_gelu')
        parser.add_argument('--step-scale', dest='step_scale', type=float,
                            default=1.0)
        for name, default in ToySizes().as_dict().items():
            parser.add_argument('--%s' % name.replace('_', '-'), dest=name,
                                type=int, default=default)
        parser.set_defaults(run=cmd_prepare)

        # train
        parser = commands.add_parser('train', parents=[common],
                                     help='run the stages of a config')
        parser.add_argument('--config', required=True)
        parser.add_argument('--stage', type=int, choices=(1, 2, 3),
                            help='run only this stage')
        parser.add_argument('--resume', help='checkpoint to start from')
        parser.add_argument('--out', help='override output_dir')
        parser.add_argument('--progress', action='store_true')
        parser.set_defaults(run=cmd_train)

        # eval
        parser = commands.add_parser('eval', parents=[common],
                                     help='score a checkpoint or predictions')
        parser.add_argument('--task', choices=('rec', 'tvg', 'pope'),
                            required=True)
        source = parser.add_mutually_exclusive_group(required=True)
        source.add_argument('--ckpt')
        source.add_argument('--pred', help='JSONL of {id, text}')
        parser.add_argument('--data', required=True, help='world directory')
        parser.add_argument('--out')
        parser.add_argument('--split', default='test')
        parser.add_argument('--strategy', choices=POPE_STRATEGIES,
                            default='random')
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--threshold', type=float,
                            help='REC IoU threshold')
        parser.add_argument('--m', type=float, nargs='+',
                            help='temporal IoU thresholds')
        parser.add_argument('--max-new-tokens', dest='max_new_tokens',
                            type=int)
        parser.add_argument('--plot', action='store_true',
                            help='write a metric vs threshold curve')
        parser.set_defaults(run=cmd_eval)

        # infer
        parser = commands.add_parser('infer', parents=[common],
                                     help='answer one prompt')
        parser.add_argument('--ckpt', required=True)
        parser.add_argument('--media', required=True,
                            help='media stem or one of its .npy files')
        parser.add_argument('--kind', default='image',
                            choices=('image', 'video', 'audio', 'audio_image'))
        parser.add_argument('--prompt', required=True)
        parser.add_argument('--max-new-tokens', dest='max_new_tokens',
                            type=int, default=40)
        parser.add_argument('--json', action='store_true')
        parser.add_argument('--out', help='also record the answer here')
        parser.set_defaults(run=cmd_infer)

        # ablation
        parser = commands.add_parser('ablation', parents=[common],
                                     help='coarse-to-fine comparison')
        parser.add_argument('--out')
        parser.add_argument('--seeds', type=int, nargs='+',
                            default=[0, 1, 2, 3, 4])
        parser.add_argument('--step-scale', dest='step_scale', type=float,
                            default=1.0)
        parser.add_argument('--train-images', dest='train_images', type=int,
                            default=400)
        parser.add_argument('--held-out-images', dest='held_out_images',
                            type=int, default=200)
        parser.add_argument('--progress', action='store_true')
        parser.set_defaults(run=cmd_ablation)

    def parse_args(self, *args, **kwargs):
        options = argparse.ArgumentParser.parse_args(self, *args, **kwargs)

        # counts must be positive before any work starts
        for name in ('n', 'max_new_tokens'):
            value = getattr(options, name, None)
            if value is not None and value < 1:
                self.error('--%s must be >= 1' % name.replace('_', '-'))
        if getattr(options, 'out', None) is None and \
           options.command in ('eval', 'ablation'):
            options.out = default_output_dir(options.command)
        return options


def configure_logging(verbosity, logFile=None):
    handlers = [logging.StreamHandler(sys.stderr)]
    if logFile:
        handlers.append(logging.FileHandler(logFile))
    logging.basicConfig(level=LOG_LEVELS[min(verbosity, 2)],
                        format=LOG_FORMAT, handlers=handlers, force=True)


# -------------------------------------------------------------------------
# commands
# -------------------------------------------------------------------------
def cmd_gen(options, manifest):
    world = gen_world(options.world, options.seed, options.n)
    manifest.add(*world.write(options.out))
    print('wrote %i %s items (%i annotations) to %s' % (
        len(world.manifest['items']), options.world, len(world.annotations),
        options.out))


def cmd_build(options, manifest):
    bank = TemplateBank.builtin(options.templates)
    rng = np.random.default_rng([options.seed, options.stage])
    directory = os.path.dirname(os.path.abspath(options.out))
    os.makedirs(directory, exist_ok=True)
    build = build_stage_corpus(options.stage, options.source, rng,
                               options.out, tasks=options.tasks or
                               STAGE_TASKS[options.stage], bank=bank)
    manifest.add(build.path, build.report_path)
    print(corpus_table(build.report))


def corpus_table(report):
    lines = ['stage %i corpus: %i lines' % (report['stage'], report['lines']),
             '%-24s %6s %6s %8s' % ('task', 'raw', 'kept', 'rejected')]
    for task, counts in report['tasks'].items():
        lines.append('%-24s %6i %6i %8i' % (task, counts['raw'],
                                            counts['kept'],
                                            sum(counts['rejected'].values())))
    lines.append('%-24s %6i %6i %8i' % ('total', report['raw'],
                                        report['kept'], report['rejected']))
    return '\n'.join(lines)


def cmd_prepare(options, manifest):
    sizes = ToySizes(**dict((name, getattr(options, name))
                            for name in ToySizes().as_dict()))
    config, heldOut, written = toy_pipeline(
        options.out, options.seed, sizes, options.alpha, options.adapter,
        stepScale=options.step_scale)
    manifest.add(*written)
    print('toy configuration: %s' % os.path.join(options.out, 'toy.yaml'))
    for kind, path in sorted(heldOut.items()):
        print('held-out %s world: %s' % (kind, path))


def cmd_train(options, manifest):
    config = load_config(options.config)
    if options.out:
        config.output_dir = options.out
    manifest.output_dir = config.output_dir
    manifest.seed = config.seed

    if options.stage is None:
        if options.resume:
            raise PlanError('--resume needs --stage')
        result = run_pipeline(config, progress=options.progress)
        reports = result.reports
        manifest.add(result.report_path)
    else:
        plan = config.plan(options.stage)
        if options.resume:
            model = load_model(options.resume)
        elif options.stage >= 2:
            raise PlanError('stage %i starts from the stage %i checkpoint; '
                            'pass it with --resume'
                            % (options.stage, options.stage - 1))
        else:
            model = GroundingModel(config.encoder, config.llm)
        checkpoint, report = train_stage(model, plan,
                                         outDir=config.output_dir,
                                         progress=options.progress)
        reports = [report]
    for report in reports:
        manifest.add(report.checkpoint, os.path.join(
            config.output_dir, 'stage%i.report.json' % report.stage))
        print('stage %i: %i steps, final loss %.4f -> %s' % (
            report.stage, report.steps,
            report.mean_loss(-min(25, len(report.loss)), None),
            report.checkpoint))
    manifest.add(plot_reports(reports, os.path.join(config.output_dir,
                                                    'losses.agr')))


def cmd_eval(options, manifest):
    config = EvalConfig()
    try:
        if options.threshold is not None:
            config.rec_iou_threshold = options.threshold
        if options.m:
            config.tvg_thresholds = options.m
        if options.max_new_tokens:
            config.max_new_tokens = options.max_new_tokens
    except (TypeError, ValueError) as error:
        raise PlanError(str(error))
    manifest.seed = options.seed

    if options.pred:
        source, checkpoint = read_predictions(options.pred), None
    else:
        source, checkpoint = load_model(options.ckpt), options.ckpt
    kwargs = dict(split=options.split, checkpoint=checkpoint)
    if options.task == 'rec':
        report = eval_rec(source, options.data, config, **kwargs)
    elif options.task == 'tvg':
        report = eval_tvg(source, options.data, config, **kwargs)
    else:
        probes = gen_pope_probes(load_manifest(options.data),
                                 options.strategy, options.seed)
        manifest.add(probes.write(os.path.join(
            _ensure_dir(options.out), 'probes.%s.jsonl' % options.strategy)))
        report = eval_pope(source, probes, config, worldDir=options.data,
                           **kwargs)
    manifest.add(*report.write(os.path.join(options.out,
                                            '%s.json' % options.task)))
    if options.plot and options.task != 'pope':
        curve = report.curve(config.curve_thresholds())
        manifest.add(plot_threshold_curves(
            {options.task: curve},
            os.path.join(options.out, '%s_curve.agr' % options.task),
            'rec accuracy' if options.task == 'rec' else 'R@1'))
    print(report.table(), end='')


def cmd_infer(options, manifest):
    model = load_model(options.ckpt)
    stem = options.media
    if stem.endswith('.npy'):
        stem = stem[:-len('.npy')].rsplit('.', 1)[0]
    store = MediaStore(model.encoder_config)
    outputs = store.encoder_outputs(model, {'kind': options.kind,
                                            'ref': stem})
    prompt = render_prompt(options.prompt, [o.modality for o in outputs])
    text = model.generate(prompt, outputs, options.max_new_tokens)
    answer = {
        'text': text,
        'boxes': [span.target.as_list() for span in parse_boxes(text)],
        'segments': [span.target.as_list() for span in parse_segments(text)],
        }
    if options.json:
        print(json.dumps(answer, sort_keys=True))
    else:
        print(text)
        print('boxes: %s' % json.dumps(answer['boxes']))
        print('segments: %s' % json.dumps(answer['segments']))
    if options.out:
        path = os.path.join(_ensure_dir(options.out), 'answer.json')
        with open(path, 'w', encoding='utf-8') as outStream:
            json.dump(dict(answer, prompt=options.prompt, media=stem),
                      outStream, indent=2, sort_keys=True)
            outStream.write('\n')
        manifest.add(path)


def cmd_ablation(options, manifest):
    try:
        config = AblationConfig(seeds=options.seeds,
                                step_scale=options.step_scale,
                                train_images=options.train_images,
                                held_out_images=options.held_out_images)
    except (TypeError, ValueError) as error:
        raise PlanError(str(error))
    report, written = ablation_coarse_to_fine(config, options.out,
                                              options.progress)
    manifest.add(*written)
    manifest.add(plot_seed_comparison(report.summary(), os.path.join(
        options.out, 'ablation.agr')))
    print(report.table(), end='')


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = GroundParser()
    try:
        options = parser.parse_args(argv)
    except SystemExit as error:
        return error.code
    configure_logging(options.verbose, options.log_file)

    outDir = getattr(options, 'out', None)
    if options.command == 'build':
        outDir = os.path.dirname(os.path.abspath(options.out))
    manifest = RunManifest(options.command, argv, outDir or '.',
                           config=getattr(options, 'config', None),
                           seed=getattr(options, 'seed', None))
    try:
        options.run(options, manifest)
    except (PlanError, UnknownSet) as error:
        logger.error('invalid configuration: %s', error)
        return 2
    except (GroundError, OSError) as error:
        logger.error('%s: %s', type(error).__name__, error)
        return 1
    except (TypeError, ValueError) as error:
        logger.error('invalid argument: %s', error)
        return 2
    if outDir is not None or options.command == 'train':
        path = manifest.write()
        logger.info('wrote %s', path)
    return 0


if __name__ == '__main__':
    sys.exit(main())
