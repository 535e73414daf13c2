import argparse
import os

from diagnet.commands.command import Command, add_config_argument, add_dataset_arguments, load_scenes
from diagnet.core.geometry import PatchGrid, build_targets
from diagnet.diagnet import DiagNet
from diagnet.exceptions import UsageException
from diagnet.training.checkpoint import load_checkpoint
from diagnet.utilities.command_line import parse_argument_config, parse_argument_output
from diagnet.utilities.output import RunManifest
from diagnet.utilities.render import diagmap_image, targets_full_image, targets_image, write_pgm

RENDER_TARGETS = 'targets'
RENDER_DIAGMAP = 'diagmap'


def full_image_path(out: str) -> str:
    root, ext = os.path.splitext(out)
    return f'{root}.full{ext or ".pgm"}'


class Render(Command):
    NAME = 'render'
    DESCRIPTION = 'Render target matrices or a learned diagonal map of one scene as a grayscale PGM image.'

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument(
            '--what',
            metavar='<what>',
            type=str,
            required=True,
            help=f'{RENDER_TARGETS} (degree-normalized A_diag) or {RENDER_DIAGMAP} (column norms of the edge prediction)'
        )
        add_dataset_arguments(parser)
        add_config_argument(parser)
        parser.add_argument('--checkpoint', metavar='<checkpoint>', type=str, help='Checkpoint (required for diagmap)')
        parser.add_argument('--scene', metavar='<index>', type=int, default=0, help='Scene index in the dataset')
        parser.add_argument('--full', action='store_true', help='Also write the full N x N target matrix')
        parser.add_argument('--out', metavar='<filename>', type=str, required=True, help='PGM file to write')
        parser.add_argument('--force', action='store_true', help='Overwrite an existing image')

    def run(self, args: argparse.Namespace, manifest: RunManifest):
        if args.what not in (RENDER_TARGETS, RENDER_DIAGMAP):
            raise UsageException(f'what: "{args.what}" is not one of {RENDER_TARGETS}, {RENDER_DIAGMAP}.')
        if args.what == RENDER_DIAGMAP and not args.checkpoint:
            raise UsageException('checkpoint: rendering a diagonal map needs --checkpoint.')
        out = parse_argument_output(args.out, args.force)

        checkpoint = load_checkpoint(args.checkpoint) if args.checkpoint else None
        config = checkpoint.config if checkpoint else parse_argument_config(args.config)
        scenes = load_scenes(args.dataset)
        if not 0 <= args.scene < len(scenes):
            raise UsageException(f'scene: index {args.scene} is outside 0..{len(scenes) - 1}.')
        scene = scenes[args.scene]

        if args.what == RENDER_TARGETS:
            grid = PatchGrid(scene.h_in, config.h)
            targets = build_targets(grid, scene.boxes, config.mode, config.alpha, config.diagonal)
            write_pgm(targets_image(targets, grid.h), out)
            if args.full:
                full_out = parse_argument_output(full_image_path(out), args.force)
                write_pgm(targets_full_image(targets), full_out)
                manifest.add_output('full', full_out)
        else:
            trace = DiagNet.from_checkpoint(checkpoint).diag_map(scene)
            write_pgm(diagmap_image(trace.y_hat, config.h), out)

        manifest.set_config(config)
        manifest.add_input('dataset', args.dataset)
        if args.checkpoint:
            manifest.add_input('checkpoint', args.checkpoint)
        manifest.add_output('image', out)
        manifest.add_result('what', args.what)
        manifest.add_result('scene', args.scene)
