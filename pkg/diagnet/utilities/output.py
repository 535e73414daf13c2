import os
import time
from typing import Dict, List, Optional, Tuple

from diagnet.training.config import TrainConfig, parse_key_values


class RunManifest:
    """
    Machine-parseable record of one command run. Rendered as key=value lines
    grouped by prefix: config.*, input.*, output.*, result.*
    """
    def __init__(self, command: str):
        self._command: str = command
        self._started: float = time.perf_counter()
        self._duration: Optional[float] = None

        self._config: Dict[str, str] = {}
        self._inputs: Dict[str, str] = {}
        self._outputs: Dict[str, str] = {}
        self._results: Dict[str, str] = {}

        self.path: Optional[str] = None
        self.exit_code: int = 0

    @property
    def command(self) -> str:
        return self._command

    @property
    def results(self) -> Dict[str, str]:
        return dict(self._results)

    @property
    def outputs(self) -> Dict[str, str]:
        return dict(self._outputs)

    def set_config(self, config: TrainConfig):
        self._config = parse_key_values(config.to_text())

    def add_input(self, key: str, path: str):
        self._inputs[key] = str(path)

    def add_output(self, key: str, path: str):
        self._outputs[key] = str(path)

    def add_result(self, key: str, value):
        self._results[key] = str(value)

    def add_results(self, results: Dict[str, str]):
        for key, value in results.items():
            self.add_result(key, value)

    def finish(self) -> "RunManifest":
        self._duration = time.perf_counter() - self._started
        return self

    def to_pairs(self) -> List[Tuple[str, str]]:
        pairs = [('command', self._command)]
        for prefix, group in (
            ('config', self._config),
            ('input', self._inputs),
            ('output', self._outputs),
            ('result', self._results)
        ):
            pairs += [(f'{prefix}.{k}', v) for k, v in group.items()]

        duration = self._duration if self._duration is not None else time.perf_counter() - self._started
        pairs.append(('duration_s', f'{duration:.3f}'))
        pairs.append(('exit_code', str(self.exit_code)))
        return pairs


class Output:
    def __init__(self, manifest: RunManifest):
        self.manifest: RunManifest = manifest

    def format(self) -> str:
        return '\n'.join(f'{k}={v}' for k, v in self.manifest.to_pairs()) + '\n'

    def to_stdout(self):
        print(self.format(), end='')

    def to_file(self, fname: Optional[str] = None):
        fname = fname or self.manifest.path
        if not fname:
            return

        os.makedirs(os.path.dirname(os.path.abspath(fname)), exist_ok=True)
        with open(fname, 'w') as f:
            f.write(self.format())
