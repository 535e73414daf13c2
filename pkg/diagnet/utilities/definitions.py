import os

# Package paths
PACKAGE_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))

# Commands path
COMMANDS_PATH = os.path.join(PACKAGE_DIR, 'commands')

# Dataset text format
DATASET_MAGIC = 'DIAGNET-SYNTH'
DATASET_VERSION = 'v1'

# Checkpoint binary format
CHECKPOINT_MAGIC = b'DGNT'
CHECKPOINT_VERSION = 1

# Norm smoothing in both diagonal losses
NORM_EPSILON = 1e-12

# Detection defaults
DEFAULT_SCORE_THRESHOLD = 0.2
DEFAULT_NMS_IOU = 0.5
COCO_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))

# Parallelism cap
THREADS_ENV_VAR = 'DIAGNET_THREADS'


def thread_count() -> int:
    value = os.environ.get(THREADS_ENV_VAR)
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            pass
    return os.cpu_count() or 1
