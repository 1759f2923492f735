"""Adam and the cosine learning-rate schedule.

>>> cosine_lr(0.4, 0, 10), cosine_lr(0.4, 5, 10), cosine_lr(0.4, 10, 10)
(0.4, 0.2, 0.0)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from dataclasses import field
from typing import TYPE_CHECKING

import numpy as np

from sigma2r.exc import MissingGradientError
from sigma2r.exc import ShapeError


if TYPE_CHECKING:
    from collections.abc import Mapping

    from numpy.typing import NDArray

    from sigma2r.autodiff import Tensor


log = logging.getLogger('sigma2r.optim')


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first: dict[str, NDArray[np.float64]] = field(default_factory=dict)
    second: dict[str, NDArray[np.float64]] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, NDArray[np.float64] | None],
    state: AdamState,
    lr_now: float | None = None
) -> None:
    """One bias-corrected Adam update of every parameter."""

    for name, tensor in params.items():
        grad = grads.get(name)
        if grad is None:
            raise MissingGradientError(name)
        if grad.shape != tensor.shape:
            raise ShapeError('adam_step', tensor.shape, grad.shape)

    lr = state.lr if lr_now is None else lr_now
    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step

    for name, tensor in params.items():
        grad = grads[name]
        m = state.first.get(name)
        v = state.second.get(name)
        if m is None or v is None:
            m = np.zeros(tensor.shape)
            v = np.zeros(tensor.shape)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.first[name] = m
        state.second[name] = v

        update = (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        tensor.assign(tensor.data - lr * update)


class Adam:
    """Adam over a named parameter registry."""

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8
    ) -> None:

        self.params = dict(params)
        self.state = AdamState(lr, betas[0], betas[1], eps)

    def __repr__(self) -> str:
        return "<Adam lr=%g step=%d params=%d>" % (
            self.state.lr, self.state.step, len(self.params))

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()

    def step(self, lr_now: float | None = None) -> None:
        if not self.params:
            return
        grads = {name: t.grad for name, t in self.params.items()}
        adam_step(self.params, grads, self.state, lr_now)


def check_disjoint(*optimizers: Adam) -> None:
    """Raise ``ValueError`` if two optimizers share a parameter."""

    seen: set[int] = set()
    for optimizer in optimizers:
        ids = {id(tensor): name for name, tensor in optimizer.params.items()}
        for key, name in ids.items():
            if key in seen:
                raise ValueError(
                    "parameter updated by two optimizers: %s." % name)
        seen.update(ids)


def cosine_lr(base_lr: float, epoch: float, total_epochs: int) -> float:
    """Half-cosine decay from ``base_lr`` to zero over ``total_epochs``."""

    if total_epochs <= 0:
        return base_lr
    if not 0 <= epoch <= total_epochs:
        raise ValueError(
            "epoch %r outside [0, %d]." % (epoch, total_epochs))
    return base_lr * (1 + math.cos(math.pi * epoch / total_epochs)) / 2
