"""Minimax training loop.

Two phase losses share one reconstruction term.  In the minimize phase the
prior maps are pulled toward the (stop-gradient) series maps; in the
maximize phase the series maps are pushed away from the (stop-gradient)
prior maps.  Both phases are combined into a single objective per batch --
reconstruction counted once, plus the minimize-phase discrepancy term minus
the maximize-phase one -- so the stop-gradient placement alone routes the
opposing updates, and one backward/ADAM step per batch suffices.

Strategies:

* ``minimax``   -- the combined objective above (default)
* ``max_only``  -- reconstruction minus the discrepancy, no stop-gradients
* ``recon_only`` -- plain reconstruction autoencoder
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .data import window_slices
from .discrepancy import DiscrepancyConfig, assoc_discrepancy
from .errors import ConfigError, ContractError, NumericError
from .model import ForwardResult, ModelConfig, ModelParams, forward, init_params
from .optim import adam_init, adam_step, zero_grad
from .rng import XorShift64Star
from .tensor import Tensor, backward, mean_all, mul, no_grad, scale, sub

STRATEGIES = ("minimax", "max_only", "recon_only")


@dataclass
class TrainConfig:
    lambda_: Optional[float] = None  # None: take the model config's value
    lr: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 10
    patience: int = 3
    seed: int = 0
    strategy: str = "minimax"
    discrepancy: DiscrepancyConfig = field(default_factory=DiscrepancyConfig)

    def validate(self) -> None:
        if self.lambda_ is not None and self.lambda_ < 0:
            raise ConfigError("lambda_ must be nonnegative")
        for name in ("lr", "batch_size", "max_epochs", "patience"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}")
        self.discrepancy.validate()


@dataclass
class EpochStats:
    epoch: int
    recon_loss: float
    assdis: float
    val_loss: float


@dataclass
class TrainLog:
    epochs: List[EpochStats] = field(default_factory=list)
    stopped_early: bool = False
    best_epoch: int = 0

    def to_csv(self) -> str:
        lines = ["epoch,recon_loss,assdis,val_loss"]
        for e in self.epochs:
            lines.append(
                f"{e.epoch},{e.recon_loss:.17g},{e.assdis:.17g},{e.val_loss:.17g}"
            )
        return "\n".join(lines) + "\n"


def reconstruction_loss(fr: ForwardResult, x: Tensor) -> Tensor:
    """Mean squared error over all window entries."""
    diff = sub(fr.x_hat, x)
    return mean_all(mul(diff, diff))


def discrepancy_mean(
    fr: ForwardResult, dcfg: DiscrepancyConfig, detach: str = "none"
) -> Tensor:
    """Window mean of the per-point discrepancy, optional stop-gradient side.

    ``detach`` names the branch whose gradient is cut: "series" for the
    minimize phase, "prior" for the maximize phase, "none" for the raw value.
    """
    if detach == "series":
        layers = [o.detach_series() for o in fr.layers]
    elif detach == "prior":
        layers = [o.detach_prior() for o in fr.layers]
    elif detach == "none":
        layers = list(fr.layers)
    else:
        raise ContractError(f"detach must be none/series/prior, got {detach!r}")
    return mean_all(assoc_discrepancy(layers, dcfg))


def phase_losses(
    fr: ForwardResult, x: Tensor, lambda_: float, dcfg: DiscrepancyConfig
) -> Tuple[Tensor, Tensor]:
    """Per-phase total losses (minimize, maximize).

    minimize = recon + lambda * discrepancy with series maps detached;
    maximize = recon - lambda * discrepancy with prior maps detached.
    """
    if lambda_ < 0:
        raise ContractError("lambda_ must be nonnegative")
    recon = reconstruction_loss(fr, x)
    minimize = recon + scale(discrepancy_mean(fr, dcfg, "series"), lambda_)
    maximize = recon - scale(discrepancy_mean(fr, dcfg, "prior"), lambda_)
    return minimize, maximize


def _window_objective(
    x: Tensor,
    params: ModelParams,
    mcfg: ModelConfig,
    lambda_: float,
    dcfg: DiscrepancyConfig,
    strategy: str,
    drop_rng: XorShift64Star | None,
) -> Tuple[Tensor, float, float]:
    """(objective, recon value, discrepancy value) for one window."""
    fr = forward(x, params, mcfg, drop_rng)
    recon = reconstruction_loss(fr, x)
    if strategy == "recon_only" or lambda_ == 0.0:
        with no_grad():
            dm_val = discrepancy_mean(fr, dcfg).item()
        return recon, recon.item(), dm_val
    if strategy == "minimax":
        dm_min = discrepancy_mean(fr, dcfg, "series")
        dm_max = discrepancy_mean(fr, dcfg, "prior")
        obj = recon + scale(dm_min, lambda_) - scale(dm_max, lambda_)
        return obj, recon.item(), dm_max.item()
    if strategy == "max_only":
        dm = discrepancy_mean(fr, dcfg)
        obj = recon - scale(dm, lambda_)
        return obj, recon.item(), dm.item()
    raise ConfigError(f"strategy must be one of {STRATEGIES}")


def train_step(
    batch: Sequence[np.ndarray],
    params: ModelParams,
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    adam_state,
    drop_rng: XorShift64Star | None = None,
) -> Tuple[float, float]:
    """One backward/ADAM step on a batch of windows; returns (recon, assdis)."""
    if len(batch) == 0:
        raise ContractError("train_step needs a non-empty batch")
    lambda_ = mcfg.lambda_ if tcfg.lambda_ is None else tcfg.lambda_
    total = None
    recon_sum = 0.0
    dm_sum = 0.0
    for win in batch:
        obj, recon_val, dm_val = _window_objective(
            Tensor(win), params, mcfg, lambda_, tcfg.discrepancy,
            tcfg.strategy, drop_rng,
        )
        total = obj if total is None else total + obj
        recon_sum += recon_val
        dm_sum += dm_val
    loss = scale(total, 1.0 / len(batch))
    if not np.isfinite(loss.data).all():
        raise NumericError(
            f"training loss is not finite (recon mean {recon_sum / len(batch)})"
        )
    backward(loss)
    for p in params.trainable():
        if p.grad is None:  # parameter off the objective's path: zero gradient
            p.grad = np.zeros_like(p.data)
    adam_step(params.trainable(), adam_state)
    zero_grad(params.trainable())
    return recon_sum / len(batch), dm_sum / len(batch)


def validation_loss(
    windows: Sequence[np.ndarray],
    params: ModelParams,
    mcfg: ModelConfig,
    lambda_: float,
    dcfg: DiscrepancyConfig,
) -> float:
    """Mean minimize-phase loss over validation windows (no gradients)."""
    with no_grad():
        total = 0.0
        for win in windows:
            fr = forward(win, params, mcfg)
            minimize, _ = phase_losses(fr, Tensor(win), lambda_, dcfg)
            total += minimize.item()
    return total / len(windows)


def non_overlapping_windows(values: np.ndarray, window: int) -> List[np.ndarray]:
    """Training windows: consecutive, tail shorter than the window dropped."""
    return [w.values for w in window_slices(values, window, "train_drop_tail")]


def fit(
    train_values: np.ndarray,
    val_values: np.ndarray,
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    log_hook=None,
) -> Tuple[ModelParams, TrainLog]:
    """Train on non-overlapped windows with early stopping on validation loss.

    Windows are reshuffled each epoch with the seeded generator.  Training
    stops after ``patience`` consecutive epochs without strict improvement
    of the validation loss and returns the best-validation parameters.
    """
    mcfg.validate()
    tcfg.validate()
    lambda_ = mcfg.lambda_ if tcfg.lambda_ is None else tcfg.lambda_
    train_windows = non_overlapping_windows(np.asarray(train_values, dtype=np.float64),
                                            mcfg.window)
    val_windows = non_overlapping_windows(np.asarray(val_values, dtype=np.float64),
                                          mcfg.window)
    params = init_params(mcfg, tcfg.seed)
    adam_state = adam_init(params.trainable(), lr=tcfg.lr)
    shuffle_rng = XorShift64Star(tcfg.seed).derive(1)
    drop_rng = XorShift64Star(tcfg.seed).derive(2) if mcfg.dropout > 0.0 else None

    log = TrainLog()
    best_val = np.inf
    best_values = params.copy_values()
    best_epoch = 0
    bad_epochs = 0
    for epoch in range(1, tcfg.max_epochs + 1):
        order = shuffle_rng.permutation(len(train_windows))
        recon_vals = []
        dm_vals = []
        for start in range(0, len(order), tcfg.batch_size):
            batch = [train_windows[i] for i in order[start : start + tcfg.batch_size]]
            recon, dm = train_step(batch, params, mcfg, tcfg, adam_state, drop_rng)
            recon_vals.append(recon)
            dm_vals.append(dm)
        val_loss = validation_loss(val_windows, params, mcfg, lambda_, tcfg.discrepancy)
        stats = EpochStats(
            epoch=epoch,
            recon_loss=float(np.mean(recon_vals)),
            assdis=float(np.mean(dm_vals)),
            val_loss=val_loss,
        )
        log.epochs.append(stats)
        if log_hook is not None:
            log_hook(stats)
        if val_loss < best_val:
            best_val = val_loss
            best_values = params.copy_values()
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= tcfg.patience:
                log.stopped_early = True
                break
    params.load_values(best_values)
    log.best_epoch = best_epoch
    return params, log
