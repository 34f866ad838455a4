"""SGD with momentum and coupled weight decay, plus the step learning-rate schedule."""

from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

from .errors import ConfigError
from .tensor import Parameter


def sgd_momentum_step(
    params: Iterable[Parameter],
    lr: float,
    momentum: float = 0.9,
    weight_decay: float = 5e-4,
) -> List[Parameter]:
    """One update per parameter, then zero its gradient.

    v <- momentum * v + (grad + weight_decay * value); value <- value - lr * v
    """
    updated = []
    for param in params:
        step = param.grad + weight_decay * param.data if weight_decay else param.grad
        param.velocity *= momentum
        param.velocity += step
        param.data -= lr * param.velocity
        param.zero_grad()
        updated.append(param)
    return updated


class SGD:
    """Optimizer over parameter groups; each group scales the step learning rate."""

    def __init__(self, params: Sequence[Parameter], momentum: float = 0.9, weight_decay: float = 5e-4, lr_mult: float = 1.0):
        self.groups: List[Tuple[List[Parameter], float]] = []
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.add_group(params, lr_mult)

    def add_group(self, params: Sequence[Parameter], lr_mult: float) -> None:
        if lr_mult <= 0:
            raise ConfigError(f"learning rate multiplier must be positive, got {lr_mult}")
        self.groups.append((list(params), lr_mult))

    @property
    def params(self) -> List[Parameter]:
        return [p for group, _ in self.groups for p in group]

    def step(self, lr: float) -> None:
        for group, lr_mult in self.groups:
            sgd_momentum_step(group, lr * lr_mult, self.momentum, self.weight_decay)

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()


@dataclass(frozen=True)
class StepSchedule:
    """Learning rate divided by ``factor`` at each decay epoch."""

    initial: float
    decay_epochs: Tuple[int, ...] = ()
    factor: float = 10.0

    def __post_init__(self):
        if self.initial <= 0:
            raise ConfigError(f"initial learning rate must be positive, got {self.initial}")
        if self.factor <= 0:
            raise ConfigError(f"decay factor must be positive, got {self.factor}")
        if any(b <= a for a, b in zip(self.decay_epochs, self.decay_epochs[1:])):
            raise ConfigError(f"decay epochs must be strictly increasing, got {self.decay_epochs}")

    def lr_at(self, epoch: int) -> float:
        passed = sum(1 for boundary in self.decay_epochs if epoch >= boundary)
        return self.initial / (self.factor**passed)
