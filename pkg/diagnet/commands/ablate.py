import argparse
import csv
import itertools
import logging

from diagnet.commands.command import Command, add_config_argument, add_dataset_arguments, add_seeds_argument, load_scenes
from diagnet.core.common import LossKind, TargetMode
from diagnet.diagnet import fit_and_evaluate
from diagnet.utilities.command_line import (
    parse_argument_config,
    parse_argument_output,
    parse_argument_seeds,
)
from diagnet.utilities.output import RunManifest

logger = logging.getLogger(__name__)


class Ablate(Command):
    NAME = 'ablate'
    DESCRIPTION = 'Train the four neck variants (hard/soft targets x min/comp loss) on shared seeds and tabulate mAP.'

    def add_arguments(self, parser: argparse.ArgumentParser):
        add_dataset_arguments(parser, validation=True)
        add_config_argument(parser)
        add_seeds_argument(parser)
        parser.add_argument('--out', metavar='<filename>', type=str, required=True, help='CSV file to write')
        parser.add_argument('--force', action='store_true', help='Overwrite an existing CSV')

    def run(self, args: argparse.Namespace, manifest: RunManifest):
        out = parse_argument_output(args.out, args.force)
        config = parse_argument_config(args.config)
        seeds = parse_argument_seeds(args.seeds) or [config.seed]

        train_scenes = load_scenes(args.dataset, config)
        val_scenes = load_scenes(args.val, config) if args.val else train_scenes

        rows = []
        for seed, mode, loss_kind in itertools.product(seeds, TargetMode, LossKind):
            variant_config = config.replace(mode=mode, loss_kind=loss_kind, seed=seed).validate()
            result = fit_and_evaluate(train_scenes, val_scenes, variant_config)
            logger.info('%s/%s seed=%d: map50=%.4f', mode, loss_kind, seed, result.map50)
            rows.append([
                str(mode), str(loss_kind), seed,
                f'{result.map50:.6f}', f'{result.map75:.6f}', f'{result.map_coco:.6f}'
            ])

        with open(out, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['mode', 'loss_kind', 'seed', 'map50', 'map75', 'map'])
            writer.writerows(rows)

        manifest.set_config(config)
        manifest.add_input('dataset', args.dataset)
        manifest.add_input('val', args.val or args.dataset)
        manifest.add_output('csv', out)
        manifest.add_result('rows', len(rows))
