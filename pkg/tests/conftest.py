"""Shared test helpers: finite-difference oracles and tiny model builders."""

from __future__ import annotations

import numpy as np
import pytest

from adformer.model import ModelConfig, init_params
from adformer.rng import XorShift64Star


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> float:
    """Elementwise relative error with a scale floor for near-zero entries."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((np.abs(analytic - numeric) / denom).max())


def fd_grad(loss_fn, array: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar loss w.r.t. an array, in place.

    ``loss_fn`` takes no arguments and must re-read ``array`` on every call;
    this is the independent oracle every autodiff check compares against.
    """
    flat = array.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn()
        flat[i] = orig - h
        down = loss_fn()
        flat[i] = orig
        grad[i] = (up - down) / (2.0 * h)
    return grad.reshape(array.shape)


def tiny_model_config(**overrides) -> ModelConfig:
    base = dict(window=8, input_dim=2, d_model=8, layers=1, heads=2, d_ff=16)
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def tiny_setup():
    cfg = tiny_model_config()
    params = init_params(cfg, seed=11)
    x = XorShift64Star(5).normal((cfg.window, cfg.input_dim))
    return cfg, params, x
