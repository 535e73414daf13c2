import argparse

from diagnet.commands.command import Command, add_dataset_arguments, load_scenes
from diagnet.diagnet import DiagNet
from diagnet.training.checkpoint import load_checkpoint
from diagnet.utilities.command_line import parse_argument_output, parse_argument_probability
from diagnet.utilities.definitions import DEFAULT_NMS_IOU, DEFAULT_SCORE_THRESHOLD
from diagnet.utilities.output import RunManifest


class Eval(Command):
    NAME = 'eval'
    DESCRIPTION = 'Run the detection pipeline over a dataset and report mAP50, mAP75 and mAP.'

    def add_arguments(self, parser: argparse.ArgumentParser):
        add_dataset_arguments(parser)
        parser.add_argument('--checkpoint', metavar='<checkpoint>', type=str, required=True, help='Trained checkpoint')
        parser.add_argument(
            '--score-threshold',
            metavar='<score>',
            type=float,
            default=DEFAULT_SCORE_THRESHOLD,
            help=f'Minimum detection score (default {DEFAULT_SCORE_THRESHOLD})'
        )
        parser.add_argument(
            '--nms-iou',
            metavar='<iou>',
            type=float,
            default=DEFAULT_NMS_IOU,
            help=f'IoU above which same-class detections are suppressed (default {DEFAULT_NMS_IOU})'
        )
        parser.add_argument('--out', metavar='<filename>', type=str, help='Also write the report to <filename>')
        parser.add_argument('--force', action='store_true', help='Overwrite an existing report')

    def run(self, args: argparse.Namespace, manifest: RunManifest):
        score_threshold = parse_argument_probability('score-threshold', args.score_threshold)
        nms_iou = parse_argument_probability('nms-iou', args.nms_iou)
        out = parse_argument_output(args.out, args.force) if args.out else None

        checkpoint = load_checkpoint(args.checkpoint)
        scenes = load_scenes(args.dataset, checkpoint.config)
        model = DiagNet.from_checkpoint(checkpoint)

        report = model.evaluate(scenes, score_threshold, nms_iou).to_report()

        manifest.set_config(checkpoint.config)
        manifest.add_input('dataset', args.dataset)
        manifest.add_input('checkpoint', args.checkpoint)
        manifest.add_result('score_threshold', score_threshold)
        manifest.add_result('nms_iou', nms_iou)
        manifest.add_results(report)

        if out:
            with open(out, 'w') as f:
                f.write(''.join(f'{k}={v}\n' for k, v in report.items()))
            manifest.add_output('report', out)
