from abc import ABC, abstractmethod
from enum import Enum
from typing import Dict

import numpy as np

from diagnet.core.linalg import Matrix
from diagnet.exceptions import ConfigException, ShapeException


class OptimizerKind(str, Enum):
    SGD = 'sgd'
    MOMENTUM = 'momentum'
    ADAM = 'adam'

    def __str__(self):
        return self.value


def sgd_step(param: Matrix, grad: Matrix, lr: float) -> Matrix:
    if param.shape != grad.shape:
        raise ShapeException(f'Gradient {grad.shape} does not match parameter {param.shape}')
    return param - lr * grad


class Optimizer(ABC):
    """
    Updates named parameter matrices in place. Any internal state is exposed
    as named matrices so checkpoints can restore it exactly.
    """
    def __init__(self, lr: float):
        self._lr: float = lr

    @property
    def lr(self) -> float:
        return self._lr

    @property
    @abstractmethod
    def KIND(self) -> OptimizerKind:
        pass

    def state(self) -> Dict[str, Matrix]:
        return {}

    def load_state(self, state: Dict[str, Matrix]):
        pass

    @abstractmethod
    def step(self, params: Dict[str, Matrix], grads: Dict[str, Matrix]):
        pass


class Sgd(Optimizer):
    KIND = OptimizerKind.SGD

    def step(self, params: Dict[str, Matrix], grads: Dict[str, Matrix]):
        for name, grad in grads.items():
            params[name][...] = sgd_step(params[name], grad, self.lr)


class Momentum(Optimizer):
    KIND = OptimizerKind.MOMENTUM

    def __init__(self, lr: float, momentum: float = 0.9):
        super().__init__(lr)
        self._momentum: float = momentum
        self._velocity: Dict[str, Matrix] = {}

    def state(self) -> Dict[str, Matrix]:
        return {f'velocity.{name}': v for name, v in self._velocity.items()}

    def load_state(self, state: Dict[str, Matrix]):
        self._velocity = {name[len('velocity.'):]: v.copy() for name, v in state.items() if name.startswith('velocity.')}

    def step(self, params: Dict[str, Matrix], grads: Dict[str, Matrix]):
        for name, grad in grads.items():
            velocity = self._velocity.setdefault(name, np.zeros_like(grad))
            velocity[...] = self._momentum * velocity - self.lr * grad
            params[name][...] = params[name] + velocity


class Adam(Optimizer):
    KIND = OptimizerKind.ADAM

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(lr)
        self._beta1: float = beta1
        self._beta2: float = beta2
        self._eps: float = eps
        self._t: int = 0

        self._m: Dict[str, Matrix] = {}
        self._v: Dict[str, Matrix] = {}

    def state(self) -> Dict[str, Matrix]:
        state = {'t': np.array([[float(self._t)]])}
        state.update({f'm.{name}': m for name, m in self._m.items()})
        state.update({f'v.{name}': v for name, v in self._v.items()})
        return state

    def load_state(self, state: Dict[str, Matrix]):
        self._t = int(state['t'][0, 0]) if 't' in state else 0
        self._m = {name[2:]: m.copy() for name, m in state.items() if name.startswith('m.')}
        self._v = {name[2:]: v.copy() for name, v in state.items() if name.startswith('v.')}

    def step(self, params: Dict[str, Matrix], grads: Dict[str, Matrix]):
        self._t += 1
        for name, grad in grads.items():
            m = self._m.setdefault(name, np.zeros_like(grad))
            v = self._v.setdefault(name, np.zeros_like(grad))
            m[...] = self._beta1 * m + (1 - self._beta1) * grad
            v[...] = self._beta2 * v + (1 - self._beta2) * grad * grad

            m_hat = m / (1 - self._beta1 ** self._t)
            v_hat = v / (1 - self._beta2 ** self._t)
            params[name][...] = params[name] - self.lr * m_hat / (np.sqrt(v_hat) + self._eps)


def make_optimizer(kind: OptimizerKind, lr: float, momentum: float = 0.9) -> Optimizer:
    match kind:
        case OptimizerKind.SGD:
            return Sgd(lr)
        case OptimizerKind.MOMENTUM:
            return Momentum(lr, momentum)
        case OptimizerKind.ADAM:
            return Adam(lr)

    raise ConfigException(f'Unknown optimizer: {kind}')
