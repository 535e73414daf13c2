import argparse
from abc import ABC, abstractmethod
from typing import List, Optional

from diagnet.data.dataset_file import import_dataset
from diagnet.data.synth import Scene
from diagnet.exceptions import ConfigException
from diagnet.training.config import TrainConfig
from diagnet.utilities.command_line import manifest_path
from diagnet.utilities.output import RunManifest


class Command(ABC):
    @property
    @abstractmethod
    def NAME(self) -> str:
        pass

    @property
    def DESCRIPTION(self) -> str:
        return ''

    @abstractmethod
    def add_arguments(self, parser: argparse.ArgumentParser):
        pass

    @abstractmethod
    def run(self, args: argparse.Namespace, manifest: RunManifest):
        """
        Does the work and records inputs, outputs and results in `manifest`.
        Exceptions propagate; main then writes the manifest with result.error.
        """
        pass

    def manifest_fname(self, args: argparse.Namespace) -> Optional[str]:
        out = getattr(args, 'out', None)
        return manifest_path(out) if out else None


def load_scenes(path: str, config: Optional[TrainConfig] = None) -> List[Scene]:
    scenes, h_in, classes = import_dataset(path)
    if config is not None:
        if h_in != config.h_in:
            raise ConfigException(f'Dataset {path} has h_in={h_in} but the config expects h_in={config.h_in}')
        if classes > config.classes:
            raise ConfigException(f'Dataset {path} has {classes} classes but the config only allows {config.classes}')
    return scenes

def add_dataset_arguments(parser: argparse.ArgumentParser, validation: bool = False):
    parser.add_argument(
        '--dataset',
        metavar='<dataset>',
        type=str,
        required=True,
        help='Dataset file written by `diagnet synth`'
    )
    if validation:
        parser.add_argument(
            '--val',
            metavar='<dataset>',
            type=str,
            help='Validation dataset (defaults to the training dataset)'
        )

def add_config_argument(parser: argparse.ArgumentParser):
    parser.add_argument(
        '--config',
        metavar='<config>',
        type=str,
        help='key=value training config (defaults are used when omitted)'
    )

def add_seeds_argument(parser: argparse.ArgumentParser):
    parser.add_argument(
        '--seeds',
        metavar='<seeds>',
        type=str,
        help='Comma-separated training seeds (defaults to the config seed)'
    )
