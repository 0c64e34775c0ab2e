"""ADAM optimizer over lists of parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from . import kernels
from .errors import ContractError
from .tensor import Tensor


@dataclass
class AdamState:
    """Moment buffers and step counter for one parameter list."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)


def adam_init(params: Sequence[Tensor], lr: float = 1e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    state.m = [np.zeros_like(p.data) for p in params]
    state.v = [np.zeros_like(p.data) for p in params]
    return state


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    """One bias-corrected ADAM update, in place on ``param.data``.

    Every parameter must carry a populated gradient; the caller is
    responsible for zeroing grads afterwards.
    """
    if len(state.m) != len(params):
        raise ContractError("optimizer state does not match the parameter list")
    state.step_count += 1
    t = state.step_count
    for i, p in enumerate(params):
        if p.grad is None:
            raise ContractError(f"parameter {i} has no gradient; run backward first")
        if not p.data.flags["C_CONTIGUOUS"]:
            raise ContractError(f"parameter {i} is not contiguous; cannot update in place")
        kernels.adam_update(
            p.data.reshape(-1),
            np.ascontiguousarray(p.grad.reshape(-1)),
            state.m[i].reshape(-1),
            state.v[i].reshape(-1),
            state.lr,
            state.beta1,
            state.beta2,
            state.eps,
            t,
        )


def zero_grad(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None
