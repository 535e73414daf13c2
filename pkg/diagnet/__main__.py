#!/usr/bin/env python3

import importlib
import inspect
import logging
import sys
from pathlib import Path
from typing import Dict, Optional, Sequence

from diagnet.commands.command import Command
from diagnet.exceptions import ConfigException, DiagNetException, UsageException
from diagnet.utilities.command_line import handle_arguments
from diagnet.utilities.definitions import COMMANDS_PATH
from diagnet.utilities.output import Output, RunManifest

LOG_LEVELS = [logging.WARNING, logging.INFO, logging.DEBUG]


def get_commands() -> Dict[str, Command]:
    commands = {}

    for command_path in sorted(Path(COMMANDS_PATH).glob('*.py')):
        if command_path.stem.startswith('_'):
            continue
        module = importlib.import_module(f'diagnet.commands.{command_path.stem}')

        # Collect every concrete Command defined in the module
        for _, command_class in inspect.getmembers(module, inspect.isclass):
            if issubclass(command_class, Command) and not inspect.isabstract(command_class):
                commands[command_class.NAME] = command_class()

    return commands

def fail(manifest: RunManifest, e: Exception, exit_code: int):
    print(f'[!] {e}', file=sys.stderr)
    manifest.add_result('error', ' '.join(str(e).split()))
    manifest.exit_code = exit_code

def main(argv: Optional[Sequence[str]] = None) -> int:
    commands = get_commands()
    args = handle_arguments(commands, argv)

    logging.basicConfig(
        level=LOG_LEVELS[min(args.verbose, len(LOG_LEVELS) - 1)],
        format='%(asctime)s %(levelname)s %(name)s: %(message)s'
    )

    command = commands[args.command]
    manifest = RunManifest(command.NAME)
    manifest.path = command.manifest_fname(args)

    try:
        command.run(args, manifest)
    except (UsageException, ConfigException) as e:
        fail(manifest, e, 2)
    except (DiagNetException, OSError) as e:
        fail(manifest, e, 1)

    output = Output(manifest.finish())
    output.to_stdout()
    try:
        output.to_file()
    except OSError as e:
        print(f'[!] Cannot write manifest: {e}', file=sys.stderr)
        return manifest.exit_code or 1
    return manifest.exit_code

if __name__ == '__main__':
    sys.exit(main())
