class DiagNetException(Exception):
    pass

class ShapeException(DiagNetException):
    pass

class ConfigException(DiagNetException):
    pass

class UsageException(DiagNetException):
    pass

class TargetException(DiagNetException):
    pass

class DivergenceException(DiagNetException):
    def __init__(self, epoch: int, batch: int, loss_name: str, value: float):
        super().__init__(f'{loss_name} diverged to {value} at epoch {epoch}, batch {batch}')
        self.epoch = epoch
        self.batch = batch

class CheckpointException(DiagNetException):
    pass

class DatasetException(DiagNetException):
    pass

class MetricException(DiagNetException):
    pass
