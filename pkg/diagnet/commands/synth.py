import argparse
import logging

from diagnet.commands.command import Command
from diagnet.data.dataset_file import export_dataset
from diagnet.data.synth import SynthSpec, gen_dataset
from diagnet.exceptions import ConfigException, UsageException
from diagnet.utilities.command_line import parse_argument_count, parse_argument_output
from diagnet.utilities.output import RunManifest

logger = logging.getLogger(__name__)


class Synth(Command):
    NAME = 'synth'
    DESCRIPTION = 'Generate a synthetic scene dataset of textured shapes with ground-truth boxes.'

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument('--seed', metavar='<seed>', type=int, default=0, help='Dataset seed')
        parser.add_argument('--count', metavar='<count>', type=int, default=100, help='Number of scenes')
        parser.add_argument('--out', metavar='<filename>', type=str, required=True, help='Dataset file to write')
        parser.add_argument('--force', action='store_true', help='Overwrite an existing file')
        parser.add_argument('--h-in', metavar='<pixels>', type=int, default=64, help='Image side length')
        parser.add_argument('--classes', metavar='<classes>', type=int, default=3, help='Number of shape classes (1-3)')
        parser.add_argument('--max-objects', metavar='<n>', type=int, default=2, help='Maximum objects per scene')
        parser.add_argument('--no-overlap', action='store_true', help='Forbid overlapping objects')

    def run(self, args: argparse.Namespace, manifest: RunManifest):
        count = parse_argument_count('count', args.count)
        out = parse_argument_output(args.out, args.force)
        spec = SynthSpec(
            h_in=args.h_in,
            classes=args.classes,
            max_objects=args.max_objects,
            overlap_allowed=not args.no_overlap
        )
        try:
            spec.validate()
        except ConfigException as e:
            raise UsageException(str(e))

        scenes = gen_dataset(args.seed, count, spec)
        export_dataset(scenes, spec.classes, out)
        logger.info('Wrote %d scenes to %s', len(scenes), out)

        manifest.add_result('seed', args.seed)
        manifest.add_result('scenes', len(scenes))
        manifest.add_result('boxes', sum(len(s.boxes) for s in scenes))
        manifest.add_result('h_in', spec.h_in)
        manifest.add_result('classes', spec.classes)
        manifest.add_output('dataset', out)
