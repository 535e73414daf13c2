import argparse
import csv
import logging

from diagnet.commands.command import Command, add_config_argument, add_dataset_arguments, add_seeds_argument, load_scenes
from diagnet.core.common import TargetMode
from diagnet.diagnet import fit_and_evaluate
from diagnet.exceptions import ConfigException, UsageException
from diagnet.utilities.command_line import (
    parse_argument_config,
    parse_argument_floats,
    parse_argument_output,
    parse_argument_seeds,
)
from diagnet.utilities.output import RunManifest

logger = logging.getLogger(__name__)


class SweepAlpha(Command):
    NAME = 'sweep-alpha'
    DESCRIPTION = 'Train one soft-target model per relaxation parameter plus a hard-target baseline and tabulate mAP50.'

    def add_arguments(self, parser: argparse.ArgumentParser):
        add_dataset_arguments(parser, validation=True)
        add_config_argument(parser)
        add_seeds_argument(parser)
        parser.add_argument('--alphas', metavar='<alphas>', type=str, required=True, help='Comma-separated alpha values')
        parser.add_argument('--out', metavar='<filename>', type=str, required=True, help='CSV file to write')
        parser.add_argument('--force', action='store_true', help='Overwrite an existing CSV')

    def run(self, args: argparse.Namespace, manifest: RunManifest):
        alphas = parse_argument_floats('alphas', args.alphas)
        if min(alphas) <= 0:
            raise UsageException(f'alphas: every alpha must be positive, got {min(alphas)}.')
        out = parse_argument_output(args.out, args.force)
        config = parse_argument_config(args.config)
        seeds = parse_argument_seeds(args.seeds) or [config.seed]

        train_scenes = load_scenes(args.dataset, config)
        val_scenes = load_scenes(args.val, config) if args.val else train_scenes

        variants = [(TargetMode.SOFT, alpha) for alpha in alphas] + [(TargetMode.HARD, None)]
        rows = []
        for seed in seeds:
            for mode, alpha in variants:
                changes = {'mode': mode, 'seed': seed}
                if alpha is not None:
                    changes['alpha'] = alpha
                try:
                    variant_config = config.replace(**changes).validate()
                except ConfigException as e:
                    raise UsageException(str(e))

                result = fit_and_evaluate(train_scenes, val_scenes, variant_config)
                logger.info('mode=%s alpha=%s seed=%d: map50=%.4f', mode, alpha, seed, result.map50)
                rows.append([str(mode), '' if alpha is None else repr(alpha), seed, f'{result.map50:.6f}'])

        with open(out, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['mode', 'alpha', 'seed', 'map50'])
            writer.writerows(rows)

        manifest.set_config(config)
        manifest.add_input('dataset', args.dataset)
        manifest.add_input('val', args.val or args.dataset)
        manifest.add_output('csv', out)
        manifest.add_result('alphas', ','.join(repr(a) for a in alphas))
        manifest.add_result('seeds', ','.join(str(s) for s in seeds))
        manifest.add_result('rows', len(rows))
