"""
Checkpoint layout (all integers little-endian):

    b'DGNT' | version u16 | epoch u32 | matrix count u32
    per matrix: name length u32 | name utf-8 | rows u32 | cols u32 | rows*cols float64
    config text length u32 | key=value config text
    rng state length u32 | rng state (JSON of the PCG64 state)

The epoch and matrix count after the version extend the basic header of magic
and version. They sit there, ahead of the payload, so a reader can size the
matrix loop before touching any blob. Any undecodable or malformed field is
reported as a CheckpointException.
"""
import json
import struct
from typing import Any, Dict, Tuple

import numpy as np

from diagnet.core.head import HeadParams
from diagnet.core.linalg import Matrix
from diagnet.core.neck import DiagNetParams
from diagnet.exceptions import CheckpointException, ConfigException, ShapeException
from diagnet.training.config import TrainConfig
from diagnet.utilities.definitions import CHECKPOINT_MAGIC, CHECKPOINT_VERSION


class Checkpoint:
    def __init__(
        self,
        neck: DiagNetParams,
        head: HeadParams,
        config: TrainConfig,
        epoch: int,
        rng_state: Dict[str, Any],
        optimizer_state: Dict[str, Matrix] = None
    ):
        self._neck: DiagNetParams = neck
        self._head: HeadParams = head
        self._config: TrainConfig = config
        self._epoch: int = epoch
        self._rng_state: Dict[str, Any] = rng_state
        self._optimizer_state: Dict[str, Matrix] = dict(optimizer_state or {})

    @property
    def neck(self) -> DiagNetParams:
        return self._neck

    @property
    def head(self) -> HeadParams:
        return self._head

    @property
    def config(self) -> TrainConfig:
        return self._config

    @property
    def epoch(self) -> int:
        return self._epoch

    @property
    def rng_state(self) -> Dict[str, Any]:
        return self._rng_state

    @property
    def optimizer_state(self) -> Dict[str, Matrix]:
        return dict(self._optimizer_state)

    def named_matrices(self) -> Dict[str, Matrix]:
        matrices = {}
        matrices.update(self.neck.named_matrices())
        matrices.update(self.head.named_matrices())
        matrices.update({f'opt.{name}': m for name, m in self._optimizer_state.items()})
        return matrices

    def __eq__(self, other):
        if isinstance(other, Checkpoint):
            mine, theirs = self.named_matrices(), other.named_matrices()
            return (
                mine.keys() == theirs.keys() and
                all(np.array_equal(mine[k], theirs[k]) for k in mine) and
                self.config == other.config and
                self.epoch == other.epoch and
                self.rng_state == other.rng_state
            )
        return False


def _pack_blob(data: bytes) -> bytes:
    return struct.pack('<I', len(data)) + data

def checkpoint_to_bytes(ckpt: Checkpoint) -> bytes:
    matrices = ckpt.named_matrices()

    out = [CHECKPOINT_MAGIC, struct.pack('<HII', CHECKPOINT_VERSION, ckpt.epoch, len(matrices))]
    for name, matrix in matrices.items():
        matrix = np.atleast_2d(matrix)
        out.append(_pack_blob(name.encode('utf-8')))
        out.append(struct.pack('<II', *matrix.shape))
        out.append(np.ascontiguousarray(matrix, dtype='<f8').tobytes())

    out.append(_pack_blob(ckpt.config.to_text().encode('utf-8')))
    out.append(_pack_blob(json.dumps(ckpt.rng_state, sort_keys=True).encode('utf-8')))
    return b''.join(out)


class _Reader:
    def __init__(self, data: bytes):
        self._data: bytes = data
        self._offset: int = 0

    def take(self, size: int) -> bytes:
        if self._offset + size > len(self._data):
            raise CheckpointException(f'Checkpoint is truncated at byte {self._offset} (needed {size} more)')
        chunk = self._data[self._offset:self._offset + size]
        self._offset += size
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def blob(self) -> bytes:
        (size,) = self.unpack('<I')
        return self.take(size)

    @property
    def exhausted(self) -> bool:
        return self._offset == len(self._data)


def _text(blob: bytes, what: str) -> str:
    try:
        return blob.decode('utf-8')
    except UnicodeDecodeError as e:
        raise CheckpointException(f'Checkpoint {what} is not valid UTF-8: {e}')

def _rng_state(blob: bytes) -> Dict[str, Any]:
    try:
        state = json.loads(_text(blob, 'rng state'))
    except ValueError as e:
        raise CheckpointException(f'Checkpoint rng state is not valid JSON: {e}')
    if not isinstance(state, dict) or state.get('bit_generator') != 'PCG64':
        raise CheckpointException('Checkpoint rng state is not a PCG64 state')
    return state


def checkpoint_from_bytes(data: bytes) -> Checkpoint:
    reader = _Reader(data)
    magic = reader.take(len(CHECKPOINT_MAGIC))
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointException(f'Bad checkpoint magic {magic!r}, expected {CHECKPOINT_MAGIC!r}')

    version, epoch, count = reader.unpack('<HII')
    if version != CHECKPOINT_VERSION:
        raise CheckpointException(f'Unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}')

    matrices: Dict[str, Matrix] = {}
    for _ in range(count):
        name = _text(reader.blob(), 'matrix name')
        rows, cols = reader.unpack('<II')
        buffer = reader.take(rows * cols * 8)
        matrices[name] = np.frombuffer(buffer, dtype='<f8').astype(np.float64).reshape(rows, cols)

    try:
        config = TrainConfig.from_text(_text(reader.blob(), 'config'))
    except ConfigException as e:
        raise CheckpointException(f'Checkpoint config is invalid: {e}')
    rng_state = _rng_state(reader.blob())
    if not reader.exhausted:
        raise CheckpointException('Trailing bytes after checkpoint payload')

    try:
        neck = DiagNetParams(matrices['neck.w_emb'], matrices['neck.w_pred'])
        head = HeadParams.from_named_matrices(matrices, config.s, config.classes)
    except KeyError as e:
        raise CheckpointException(f'Checkpoint is missing matrix {e}')
    except ShapeException as e:
        raise CheckpointException(f'Checkpoint matrices are inconsistent: {e}')

    optimizer_state = {name[len('opt.'):]: m for name, m in matrices.items() if name.startswith('opt.')}
    return Checkpoint(neck, head, config, epoch, rng_state, optimizer_state)

def save_checkpoint(ckpt: Checkpoint, path: str):
    with open(path, 'wb') as f:
        f.write(checkpoint_to_bytes(ckpt))

def load_checkpoint(path: str) -> Checkpoint:
    with open(path, 'rb') as f:
        return checkpoint_from_bytes(f.read())
