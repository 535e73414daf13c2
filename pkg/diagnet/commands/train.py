import argparse
import logging
import os

from diagnet.commands.command import Command, add_config_argument, add_dataset_arguments, load_scenes
from diagnet.training.checkpoint import load_checkpoint, save_checkpoint
from diagnet.training.trainer import train
from diagnet.utilities.command_line import parse_argument_config
from diagnet.utilities.output import RunManifest

logger = logging.getLogger(__name__)

CHECKPOINT_FNAME = 'checkpoint.dgnt'
LOSS_LOG_FNAME = 'loss.csv'
MANIFEST_FNAME = 'train.manifest.txt'


class Train(Command):
    NAME = 'train'
    DESCRIPTION = 'Alternately train the diagonal neck and the detection head, writing a checkpoint and a loss log.'

    def add_arguments(self, parser: argparse.ArgumentParser):
        add_dataset_arguments(parser)
        add_config_argument(parser)
        parser.add_argument('--out', metavar='<directory>', type=str, required=True, help='Output directory')
        parser.add_argument(
            '--resume',
            metavar='<checkpoint>',
            type=str,
            help='Continue from a checkpoint until the configured epoch count'
        )

    def manifest_fname(self, args: argparse.Namespace) -> str:
        return os.path.join(args.out, MANIFEST_FNAME)

    def run(self, args: argparse.Namespace, manifest: RunManifest):
        checkpoint = load_checkpoint(args.resume) if args.resume else None
        if args.config or checkpoint is None:
            config = parse_argument_config(args.config)
        else:
            config = checkpoint.config

        scenes = load_scenes(args.dataset, config)
        manifest.set_config(config)
        manifest.add_input('dataset', args.dataset)
        if args.config:
            manifest.add_input('config', args.config)
        if args.resume:
            manifest.add_input('resume', args.resume)

        result = train(scenes, config, checkpoint)

        os.makedirs(args.out, exist_ok=True)
        checkpoint_fname = os.path.join(args.out, CHECKPOINT_FNAME)
        loss_fname = os.path.join(args.out, LOSS_LOG_FNAME)
        save_checkpoint(result.checkpoint, checkpoint_fname)
        with open(loss_fname, 'w') as f:
            f.write(result.loss_log.to_csv())

        manifest.add_output('checkpoint', checkpoint_fname)
        manifest.add_output('loss_log', loss_fname)
        manifest.add_result('epoch', result.checkpoint.epoch)
        if records := result.loss_log.records:
            manifest.add_result('final_diag_loss', repr(records[-1].diag_loss))
            manifest.add_result('final_det_loss', repr(records[-1].det_loss))
