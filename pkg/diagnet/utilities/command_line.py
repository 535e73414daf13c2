import argparse
import os
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

from diagnet.exceptions import UsageException
from diagnet.training.config import TrainConfig

if TYPE_CHECKING:
    from diagnet.commands.command import Command


def parse_argument_count(name: str, value: int) -> int:
    if value < 1:
        raise UsageException(f'{name}: must be at least 1, got {value}.')
    return value

def parse_argument_probability(name: str, value: float) -> float:
    if not 0.0 <= value <= 1.0:
        raise UsageException(f'{name}: must lie in [0, 1], got {value}.')
    return value

def parse_argument_dims(comma_separated_dims: str) -> Tuple[int, int, int]:
    try:
        dims = tuple(int(d) for d in comma_separated_dims.split(','))
    except ValueError:
        raise UsageException(f'dims: "{comma_separated_dims}" is not a comma-separated list of integers.')

    if len(dims) != 3 or min(dims) < 1:
        raise UsageException(f'dims: expected three positive integers N,L,L\', got "{comma_separated_dims}".')
    return dims

def parse_argument_floats(name: str, comma_separated_values: Optional[str]) -> List[float]:
    if not comma_separated_values or not comma_separated_values.strip():
        raise UsageException(f'{name}: list is empty.')

    values = []
    for value_str in comma_separated_values.split(','):
        if not (vs := value_str.strip()):
            continue
        try:
            values.append(float(vs))
        except ValueError:
            raise UsageException(f'{name}: "{vs}" is not a number.')

    if not values:
        raise UsageException(f'{name}: list is empty.')
    return values

def parse_argument_seeds(comma_separated_seeds: Optional[str]) -> Optional[List[int]]:
    if not comma_separated_seeds:
        return

    try:
        return [int(s) for s in comma_separated_seeds.split(',') if s.strip()]
    except ValueError:
        raise UsageException(f'seeds: "{comma_separated_seeds}" is not a comma-separated list of integers.')

def parse_argument_output(fname: str, force: bool = False) -> str:
    if os.path.exists(fname) and not force:
        raise UsageException(f'out: {fname} already exists, pass --force to overwrite.')

    parent = os.path.dirname(os.path.abspath(fname))
    os.makedirs(parent, exist_ok=True)
    return fname

def parse_argument_config(config_fname: Optional[str]) -> TrainConfig:
    if not config_fname:
        return TrainConfig().validate()
    return TrainConfig.from_file(config_fname)

def manifest_path(out: str) -> str:
    return f'{out}.manifest.txt'


def handle_arguments(commands: Dict[str, "Command"], argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog='diagnet',
        description='Train and evaluate a diagonal-constrained GCN neck with a grid detection head on synthetic scenes.'
    )
    parser.add_argument(
        '-v', '--verbose',
        action='count',
        default=0,
        help='Log progress (-v for INFO, -vv for DEBUG)'
    )

    subparsers = parser.add_subparsers(dest='command', metavar='<command>', required=True)
    for name, command in commands.items():
        subparser = subparsers.add_parser(name, help=command.DESCRIPTION, description=command.DESCRIPTION)
        command.add_arguments(subparser)

    return parser.parse_args(argv)
