from enum import Enum

class Diagonal(str, Enum):
    MAIN = 'main'
    ANTI = 'anti'
    BOTH = 'both'

    def __str__(self):
        return self.value

class TargetMode(str, Enum):
    HARD = 'hard'
    SOFT = 'soft'

    def __str__(self):
        return self.value

class LossKind(str, Enum):
    MIN = 'min'
    COMP = 'comp'

    def __str__(self):
        return self.value

class PoolMode(str, Enum):
    AVG = 'avg'
    MAX = 'max'

    def __str__(self):
        return self.value
