"""Full reconstruction model: embedding, stacked attention layers, head.

The forward pass maps one window of ``window x input_dim`` observations to a
reconstruction of the same shape, collecting the per-layer association maps
and scales on the way.  Checkpoints are ``.npz`` containers holding the JSON
config plus every parameter tensor; float64 values round-trip exactly.
"""

from __future__ import annotations

import io
import json
import os
from dataclasses import asdict, dataclass, field
from typing import List, Tuple

import numpy as np

from .attention import (
    AttentionConfig,
    AttentionOutput,
    AttentionWeights,
    anomaly_attention,
    distance_matrix,
)
from .errors import CompatibilityError, ConfigError, ShapeError
from .rng import XorShift64Star, seeded_init
from .tensor import Tensor, add, dropout, gelu, layer_norm, matmul, no_grad


@dataclass
class ModelConfig:
    window: int = 100
    input_dim: int = 1
    d_model: int = 512
    layers: int = 3
    heads: int = 8
    d_ff: int = 0  # 0 means 4 * d_model
    lambda_: float = 3.0
    sigma_floor: float = 1e-4
    prior_kind: str = "gaussian"
    layernorm_eps: float = 1e-5
    dropout: float = 0.0

    def __post_init__(self):
        if self.d_ff == 0:
            self.d_ff = 4 * self.d_model

    def validate(self) -> None:
        for name in ("window", "input_dim", "d_model", "layers", "heads", "d_ff"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.lambda_ < 0:
            raise ConfigError("lambda_ must be nonnegative")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        self.attention().validate()

    def attention(self) -> AttentionConfig:
        return AttentionConfig(
            d_model=self.d_model,
            heads=self.heads,
            sigma_floor=self.sigma_floor,
            prior_kind=self.prior_kind,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid model config JSON: {exc}") from exc
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown model config fields: {sorted(unknown)}")
        return cls(**raw)


@dataclass
class LayerParams:
    attn: AttentionWeights
    ff_w1: Tensor
    ff_b1: Tensor
    ff_w2: Tensor
    ff_b2: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor


@dataclass
class ModelParams:
    embed_w: Tensor  # input_dim x d_model
    pos_table: np.ndarray  # window x d_model, fixed sinusoidal
    layers: List[LayerParams] = field(default_factory=list)
    head_w: Tensor = None  # d_model x input_dim
    head_b: Tensor = None  # input_dim

    def named(self) -> List[Tuple[str, Tensor]]:
        """Trainable tensors in a fixed documented order."""
        out = [("embed_w", self.embed_w)]
        for i, lp in enumerate(self.layers):
            pre = f"layer{i}."
            out.extend(
                [
                    (pre + "w_q", lp.attn.w_q),
                    (pre + "w_k", lp.attn.w_k),
                    (pre + "w_v", lp.attn.w_v),
                    (pre + "w_sigma", lp.attn.w_sigma),
                    (pre + "w_out", lp.attn.w_out),
                    (pre + "ff_w1", lp.ff_w1),
                    (pre + "ff_b1", lp.ff_b1),
                    (pre + "ff_w2", lp.ff_w2),
                    (pre + "ff_b2", lp.ff_b2),
                    (pre + "ln1_gain", lp.ln1_gain),
                    (pre + "ln1_bias", lp.ln1_bias),
                    (pre + "ln2_gain", lp.ln2_gain),
                    (pre + "ln2_bias", lp.ln2_bias),
                ]
            )
        out.append(("head_w", self.head_w))
        out.append(("head_b", self.head_b))
        return out

    def trainable(self) -> List[Tensor]:
        return [t for _, t in self.named()]

    def copy_values(self) -> List[np.ndarray]:
        return [t.data.copy() for t in self.trainable()]

    def load_values(self, values: List[np.ndarray]) -> None:
        tensors = self.trainable()
        if len(values) != len(tensors):
            raise CompatibilityError("parameter count mismatch")
        for t, v in zip(tensors, values):
            if t.data.shape != v.shape:
                raise CompatibilityError("parameter shape mismatch")
            t.data[...] = v


@dataclass
class ForwardResult:
    x_hat: Tensor  # window x input_dim
    layers: List[AttentionOutput]


def sinusoidal_table(window: int, d_model: int) -> np.ndarray:
    """Fixed positional encoding: alternating sin/cos, base 10000."""
    pos = np.arange(window, dtype=np.float64)[:, None]
    half = np.arange(0, d_model, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, half / d_model)
    table = np.zeros((window, d_model))
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle[:, : d_model // 2])
    return table


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Deterministic initialisation; one child seed per tensor, fixed order."""
    cfg.validate()
    stream = XorShift64Star(seed)

    def fan(shape):
        return Tensor(seeded_init(shape, stream.next_u64(), "uniform_fan"),
                      requires_grad=True)

    def zeros(shape):
        return Tensor(seeded_init(shape, 0, "zeros"), requires_grad=True)

    def ones(shape):
        return Tensor(seeded_init(shape, 0, "ones"), requires_grad=True)

    d, dm, dff = cfg.input_dim, cfg.d_model, cfg.d_ff
    params = ModelParams(
        embed_w=fan((d, dm)),
        pos_table=sinusoidal_table(cfg.window, dm),
    )
    for _ in range(cfg.layers):
        params.layers.append(
            LayerParams(
                attn=AttentionWeights(
                    w_q=fan((dm, dm)),
                    w_k=fan((dm, dm)),
                    w_v=fan((dm, dm)),
                    w_sigma=fan((dm, cfg.heads)),
                    w_out=fan((dm, dm)),
                ),
                ff_w1=fan((dm, dff)),
                ff_b1=zeros((dff,)),
                ff_w2=fan((dff, dm)),
                ff_b2=zeros((dm,)),
                ln1_gain=ones((dm,)),
                ln1_bias=zeros((dm,)),
                ln2_gain=ones((dm,)),
                ln2_bias=zeros((dm,)),
            )
        )
    params.head_w = fan((dm, d))
    params.head_b = zeros((d,))
    return params


def embed(x: Tensor, params: ModelParams, cfg: ModelConfig) -> Tensor:
    """Linear value projection plus the fixed positional table."""
    if x.shape != (cfg.window, cfg.input_dim):
        raise ShapeError(
            f"expected window of shape ({cfg.window}, {cfg.input_dim}), got {x.shape}"
        )
    return add(matmul(x, params.embed_w), Tensor(params.pos_table))


def layer_forward(
    x_in: Tensor,
    lp: LayerParams,
    cfg: ModelConfig,
    dist: np.ndarray,
    drop_rng: XorShift64Star | None = None,
) -> Tuple[Tensor, AttentionOutput]:
    """One block: attention, add & norm, feed-forward, add & norm."""
    attn = anomaly_attention(x_in, lp.attn, cfg.attention(), dist)
    branch = attn.z_hat
    if cfg.dropout > 0.0 and drop_rng is not None:
        branch = dropout(branch, cfg.dropout, drop_rng)
    z = layer_norm(add(x_in, branch), lp.ln1_gain, lp.ln1_bias, cfg.layernorm_eps)
    ff = matmul(gelu(add(matmul(z, lp.ff_w1), lp.ff_b1)), lp.ff_w2)
    ff = add(ff, lp.ff_b2)
    if cfg.dropout > 0.0 and drop_rng is not None:
        ff = dropout(ff, cfg.dropout, drop_rng)
    x_out = layer_norm(add(z, ff), lp.ln2_gain, lp.ln2_bias, cfg.layernorm_eps)
    return x_out, attn


def forward(
    x,
    params: ModelParams,
    cfg: ModelConfig,
    drop_rng: XorShift64Star | None = None,
) -> ForwardResult:
    """Embed, run all layers, project back to input channels."""
    xt = x if isinstance(x, Tensor) else Tensor(x)
    dist = distance_matrix(cfg.window)
    h = embed(xt, params, cfg)
    outputs: List[AttentionOutput] = []
    for lp in params.layers:
        h, attn = layer_forward(h, lp, cfg, dist, drop_rng)
        outputs.append(attn)
    x_hat = add(matmul(h, params.head_w), params.head_b)
    return ForwardResult(x_hat=x_hat, layers=outputs)


def reconstruct(x: np.ndarray, params: ModelParams, cfg: ModelConfig) -> np.ndarray:
    """Inference-mode reconstruction values for one window."""
    with no_grad():
        return forward(x, params, cfg).x_hat.data


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path: str, cfg: ModelConfig, params: ModelParams) -> None:
    """Write config + parameters to an .npz file (atomic via temp + rename)."""
    arrays = {"param::" + name: t.data for name, t in params.named()}
    arrays["pos_table"] = params.pos_table
    buf = io.BytesIO()
    np.savez(buf, config_json=np.asarray(cfg.to_json()), **arrays)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def load_checkpoint(path: str) -> Tuple[ModelConfig, ModelParams]:
    """Load a checkpoint; shapes are validated against the stored config."""
    with np.load(path, allow_pickle=False) as npz:
        cfg = ModelConfig.from_json(str(npz["config_json"]))
        params = init_params(cfg, seed=0)
        for name, tensor in params.named():
            key = "param::" + name
            if key not in npz:
                raise CompatibilityError(f"checkpoint missing parameter {name}")
            value = npz[key]
            if value.shape != tensor.data.shape:
                raise CompatibilityError(
                    f"checkpoint parameter {name} has shape {value.shape}, "
                    f"config implies {tensor.data.shape}"
                )
            tensor.data[...] = value
        params.pos_table = npz["pos_table"]
    return cfg, params


