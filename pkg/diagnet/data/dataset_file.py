"""
Plain-text dataset split:

    DIAGNET-SYNTH v1 h_in=<n> classes=<n>
    <box count>
    <class> <x1> <y1> <x2> <y2>        (one line per box)
    <h_in lines of h_in intensities>   (repeated per scene)

Floats are written with 17 significant digits so reading back is lossless.
"""
from typing import List, Tuple

import numpy as np

from diagnet.core.geometry import BBox
from diagnet.data.synth import Scene
from diagnet.exceptions import DatasetException, ShapeException
from diagnet.utilities.definitions import DATASET_MAGIC, DATASET_VERSION


def _fmt(value: float) -> str:
    return format(float(value), '.17g')

def dataset_to_text(scenes: List[Scene], classes: int) -> str:
    if not scenes:
        raise DatasetException('Cannot write an empty dataset')
    h_in = scenes[0].h_in

    lines = [f'{DATASET_MAGIC} {DATASET_VERSION} h_in={h_in} classes={classes}']
    for scene in scenes:
        if scene.h_in != h_in:
            raise DatasetException(f'Mixed image sizes in one split: {scene.h_in} and {h_in}')
        lines.append(str(len(scene.boxes)))
        for box in scene.boxes:
            lines.append(' '.join([str(box.class_id)] + [_fmt(v) for v in box]))
        for row in scene.image:
            lines.append(' '.join(_fmt(v) for v in row))

    return '\n'.join(lines) + '\n'

def export_dataset(scenes: List[Scene], classes: int, path: str):
    with open(path, 'w') as f:
        f.write(dataset_to_text(scenes, classes))

def _parse_header(line: str) -> Tuple[int, int]:
    parts = line.split()
    if len(parts) != 4 or parts[0] != DATASET_MAGIC:
        raise DatasetException(f'Not a {DATASET_MAGIC} file: {line[:60]!r}')
    if parts[1] != DATASET_VERSION:
        raise DatasetException(f'Unsupported dataset version {parts[1]}, expected {DATASET_VERSION}')

    fields = dict(p.split('=', 1) for p in parts[2:] if '=' in p)
    try:
        return int(fields['h_in']), int(fields['classes'])
    except (KeyError, ValueError):
        raise DatasetException(f'Malformed dataset header: {line!r}')

def dataset_from_text(text: str) -> Tuple[List[Scene], int, int]:
    """
    Returns (scenes, h_in, classes)
    """
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise DatasetException('Dataset file is empty')
    h_in, classes = _parse_header(lines[0])

    scenes = []
    cursor = 1
    try:
        while cursor < len(lines):
            box_count = int(lines[cursor])
            cursor += 1

            boxes = []
            for line in lines[cursor:cursor + box_count]:
                class_id, x1, y1, x2, y2 = line.split()
                if not 0 <= int(class_id) < classes:
                    raise DatasetException(f'Scene {len(scenes)} has class {class_id} outside 0..{classes - 1}')
                boxes.append(BBox(float(x1), float(y1), float(x2), float(y2), int(class_id)))
            cursor += box_count

            rows = lines[cursor:cursor + h_in]
            if len(rows) != h_in:
                raise DatasetException(f'Scene {len(scenes)} is truncated')
            image = np.array([[float(v) for v in row.split()] for row in rows], dtype=np.float64)
            if image.shape != (h_in, h_in):
                raise DatasetException(f'Scene {len(scenes)} image has shape {image.shape}, expected {(h_in, h_in)}')
            cursor += h_in

            scenes.append(Scene(image, boxes))
    except (ValueError, ShapeException) as e:
        raise DatasetException(f'Malformed scene {len(scenes)}: {e}')

    return scenes, h_in, classes

def import_dataset(path: str) -> Tuple[List[Scene], int, int]:
    with open(path, 'rb') as f:
        data = f.read()
    try:
        text = data.decode('utf-8')
    except UnicodeDecodeError as e:
        raise DatasetException(f'{path} is not a text dataset: {e}')
    return dataset_from_text(text)
