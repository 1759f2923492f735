"""Command-line front end.

Every command exits with status 0 on success. Failures print a single
``error[<category>]: <message>`` line on standard error and exit with
status 1; usage errors exit with status 2.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import TYPE_CHECKING

import numpy as np

from sigma2r.data import generate_fuzzy_rgb
from sigma2r.data import write_idx
from sigma2r.exc import ConfigError
from sigma2r.exc import PlotError
from sigma2r.exc import ReportError
from sigma2r.exc import Sigma2RError
from sigma2r.layers import load_checkpoint
from sigma2r.manifest import RunManifest
from sigma2r.manifest import load_manifest
from sigma2r.plot import TRAJECTORY_VALUES
from sigma2r.plot import beta_svg
from sigma2r.plot import features2d_svg
from sigma2r.plot import trajectory_svg
from sigma2r.plot import write_svg
from sigma2r.report import compare
from sigma2r.report import load_run
from sigma2r.settings import load_config
from sigma2r.settings import parse
from sigma2r.training import evaluate
from sigma2r.training import load_datasets
from sigma2r.training import read_metrics
from sigma2r.training import train_repeats
from sigma2r.utils import atomic_write
from sigma2r.utils import write_npz


if TYPE_CHECKING:
    from collections.abc import Sequence


log = logging.getLogger('sigma2r.cli')

CONFIG_NAME = 'config.cfg'


def _float_list(value: str) -> list[float]:
    try:
        return [float(v) for v in value.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            "expected comma-separated numbers: %r" % value) from None


def gen_fuzzy(args: argparse.Namespace) -> int:
    out = args.out
    os.makedirs(out, exist_ok=True)
    manifest = RunManifest(
        'gen-fuzzy',
        config="per_class = %d\nseed = %d\ntest_per_class = %d\n" % (
            args.per_class, args.seed, args.test_per_class),
        seeds=[args.seed], directory=out)

    splits = [('', args.per_class, args.seed)]
    if args.test_per_class:
        splits.append(('.test', args.test_per_class, args.seed + 1))

    for suffix, per_class, seed in splits:
        dataset = generate_fuzzy_rgb(per_class, seed)
        images = os.path.join(out, 'images.idx' + suffix)
        labels = os.path.join(out, 'labels.idx' + suffix)
        write_idx(images, labels, dataset)
        manifest.add('images', images)
        manifest.add('labels', labels)
        print("%s: %d samples." % (images, len(dataset)))

    manifest.write()
    return 0


def train_command(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.data_dir:
        config = config.replace(data_dir=args.data_dir)
    out = args.output or config.output_dir
    os.makedirs(out, exist_ok=True)

    results = train_repeats(config, out)

    config_path = os.path.join(out, CONFIG_NAME)
    atomic_write(config_path, config.dumps().encode('utf-8'))
    manifest = RunManifest(
        'train', config=config.dumps(), seeds=config.run_seeds(),
        directory=out)
    manifest.add('config', config_path)
    for result in results:
        manifest.add('metrics', result.metrics_path)
        manifest.add('checkpoint', result.checkpoint_path)
        if result.records:
            final = result.records[-1]
            print("seed %d: train accuracy %.4f, test accuracy %.4f." % (
                result.config.seed, final.train_accuracy,
                final.test_accuracy))
    manifest.write()
    return 0


def eval_command(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.run)
    if manifest.command != 'train':
        raise ReportError("not a training run: %s." % args.run)
    config = parse(manifest.config)
    if args.data_dir:
        config = config.replace(data_dir=args.data_dir)

    checkpoints = manifest.paths('checkpoint')
    seed = manifest.seeds[0] if args.seed is None else args.seed
    if seed not in manifest.seeds:
        raise ReportError("no run with seed %d in %s." % (seed, args.run))
    model, state = load_checkpoint(checkpoints[manifest.seeds.index(seed)])

    train_set, test_set = load_datasets(config)
    dataset = train_set if args.split == 'train' else test_set
    if dataset is None:
        raise ReportError("run has no %s split." % args.split)

    result = evaluate(model, dataset)
    print("accuracy: %.4f" % result.accuracy)
    for j, value in enumerate(result.icj):
        print("I class %d: %.6f" % (j, value))

    if args.features:
        arrays = {'features': result.features, 'labels': result.labels}
        if state is not None:
            arrays['centers'] = state.centers.data
        write_npz(args.features, arrays)
    return 0


def compare_command(args: argparse.Namespace) -> int:
    report = compare(load_run(args.a), load_run(args.b))
    sys.stdout.write(report.to_text())
    if args.csv:
        report.write_csv(args.csv)
    return 0


def plot_command(args: argparse.Namespace) -> int:
    if args.kind == 'features2d':
        if not args.input:
            raise PlotError("features2d needs --input (a features dump).")
        with np.load(args.input, allow_pickle=False) as dump:
            centers = dump['centers'] if 'centers' in dump.files else None
            svg = features2d_svg(dump['features'], dump['labels'], centers)
    elif args.kind == 'wk_trajectory':
        if not args.input:
            raise PlotError("wk_trajectory needs --input (metrics or run).")
        path = args.input
        if os.path.isdir(path):
            paths = load_manifest(path).paths('metrics')
            if not paths:
                raise PlotError("no metrics in %s." % path)
            path = paths[0]
        svg = trajectory_svg(read_metrics(path), values=args.values)
    else:
        svg = beta_svg(args.k, Z=args.Z)

    write_svg(args.out, svg)
    return 0


def error_category(exc: BaseException) -> str | None:
    if isinstance(exc, Sigma2RError):
        return exc.category
    if isinstance(exc, OSError):
        return 'io'
    if isinstance(exc, ValueError):
        return 'value'
    return None


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='sigma2r',
        description="Train and analyse models with auxiliary feature losses.")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true')
    verbosity.add_argument('-q', '--quiet', action='store_true')
    commands = parser.add_subparsers(dest='command', required=True)

    p = commands.add_parser('gen-fuzzy', help="generate a Fuzzy-RGB dataset")
    p.add_argument('--per-class', type=int, required=True)
    p.add_argument('--test-per-class', type=int, default=0)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', required=True)
    p.set_defaults(func=gen_fuzzy)

    p = commands.add_parser('train', help="train from a run configuration")
    p.add_argument('--config', required=True)
    p.add_argument('--output')
    p.add_argument('--data-dir')
    p.set_defaults(func=train_command)

    p = commands.add_parser('eval', help="evaluate a trained run")
    p.add_argument('run')
    p.add_argument('--split', choices=('train', 'test'), default='test')
    p.add_argument('--seed', type=int)
    p.add_argument('--data-dir')
    p.add_argument('--features', help="write a features dump (.npz)")
    p.set_defaults(func=eval_command)

    p = commands.add_parser('compare', help="compare two runs")
    p.add_argument('a', help="baseline run directory or metrics file")
    p.add_argument('b', help="proposal run directory or metrics file")
    p.add_argument('--csv')
    p.set_defaults(func=compare_command)

    p = commands.add_parser('plot', help="draw an SVG figure")
    p.add_argument('kind', choices=('features2d', 'wk_trajectory', 'beta'))
    p.add_argument('--input')
    p.add_argument('--out', required=True)
    p.add_argument('--values', choices=TRAJECTORY_VALUES, default='k')
    p.add_argument('--k', type=_float_list, default=[0.5, 1.0, 2.0, 5.0])
    p.add_argument('--Z', type=float, default=40.0)
    p.set_defaults(func=plot_command)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = make_parser().parse_args(argv)

    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        return args.func(args)
    except Exception as exc:
        category = error_category(exc)
        if category is None:
            raise
        log.debug("command failed.", exc_info=True)
        message = exc.summary if isinstance(exc, ConfigError) else str(exc)
        sys.stderr.write("error[%s]: %s\n" % (category, message))
        return 1


if __name__ == '__main__':  # pragma: no cover
    sys.exit(main())
