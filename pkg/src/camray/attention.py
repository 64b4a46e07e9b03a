"""Positional-operator attention and the camera adapter block.

Attention variants over token features Q, K, V and per-token operators D
(see :class:`camray.encodings.TokenOperatorSet`):

    none:          O = Attn(Q, K, V)
    cape:          O = Attn(D^T o Q, D^-1 o K, V)
    gta family:    O = D o Attn(D^T o Q, D^-1 o K, D^-1 o V)

where ``o`` applies each token's operator to that token's feature
vector: 4x4 blocks on consecutive 4-chunks of the ray dims, 2D rotations
on consecutive 2-chunks of the RoPE dims. gta, prope, ucpe_ray and
ucpe_hybrid all use the gta form and differ only in how their operators
are built. Attention logits depend on relative products D_i^T D_j^-T,
so any global rigid motion of the world cancels out exactly.

The adapter block hosts a frozen-style base attention plus a low-rank
camera-aware path: tokens are projected to model_dim / C, attended with
the positional operators, and projected back through a zero-initialized
up-projection, which makes the whole block an exact no-op at init. An
optional bias injects per-token latitude/up features before the down-
projections.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encodings import ENCODING_KINDS, TokenOperator, TokenOperatorSet, _layout
from .errors import GeometryError, InputError

OPERATOR_MODES = ("direct", "transpose", "inverse")
PLACEMENTS = ("parallel", "pre", "post")

# Total parameter count of the reference video-generation stack the
# adapter is sized against (frozen backbone plus its text encoder).
REFERENCE_PIPELINE_PARAMS = 7_300_000_000
# Transformer depth of the reference backbone at model_dim 1536.
REFERENCE_BACKBONE_BLOCKS = 30


def _apply_set(ops: TokenOperatorSet, x: np.ndarray, mode: str) -> np.ndarray:
    if mode not in OPERATOR_MODES:
        raise InputError(f"unknown operator mode {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    t = len(ops)
    if x.ndim < 2 or x.shape[-1] != ops.head_dim or x.shape[-2] != t:
        raise InputError(
            f"features {x.shape} do not match operators (T={t}, head_dim={ops.head_dim})"
        )
    out = x.copy()
    rd = ops.ray_dim
    if rd > 0:
        blocks = ops.ray_blocks
        if mode == "transpose":
            blocks = np.swapaxes(blocks, -1, -2)
        elif mode == "inverse":
            blocks = np.linalg.inv(blocks)
        chunks = x[..., :rd].reshape(*x.shape[:-1], rd // 4, 4)
        out[..., :rd] = np.einsum("tij,...tnj->...tni", blocks, chunks).reshape(
            *x.shape[:-1], rd
        )
    if ops.rope.shape[1] > 0:
        angles = ops.rope if mode == "direct" else -ops.rope
        c = np.cos(angles)
        s = np.sin(angles)
        pairs = x[..., rd:].reshape(*x.shape[:-1], -1, 2)
        x0, x1 = pairs[..., 0], pairs[..., 1]
        rot = np.stack([c * x0 - s * x1, s * x0 + c * x1], axis=-1)
        out[..., rd:] = rot.reshape(*x.shape[:-1], x.shape[-1] - rd)
    return out


def apply_operator(ops, x, mode: str = "direct") -> np.ndarray:
    """Apply per-token operators to features.

    With a TokenOperatorSet, x has shape (..., T, head_dim); with a
    single TokenOperator, shape (..., head_dim). ``transpose`` applies
    the transposed blocks and negated angles, ``inverse`` the inverted
    blocks and negated angles (identical for orthonormal blocks).
    """
    if isinstance(ops, TokenOperator):
        one = TokenOperatorSet(ops.ray_block[None], ops.rope[None], ops.ray_dim)
        return _apply_set(one, np.asarray(x, dtype=np.float64)[..., None, :], mode)[
            ..., 0, :
        ]
    return _apply_set(ops, x, mode)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def attend(q, k, v, ops: TokenOperatorSet | None = None, kind: str = "none") -> np.ndarray:
    """Scaled dot-product attention with optional positional operators.

    q, k, v have shape (..., T, head_dim); ops, when given, must match T
    and head_dim. Scaling is 1/sqrt(head_dim); softmax is stabilized by
    row-max subtraction.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if kind != "none" and kind not in ENCODING_KINDS:
        raise InputError(f"unknown attention kind {kind!r}")
    if kind == "none" and ops is not None:
        raise InputError("operators passed but kind is 'none'")
    if kind != "none":
        if ops is None:
            raise InputError(f"kind {kind!r} requires token operators")
        q = apply_operator(ops, q, "transpose")
        k = apply_operator(ops, k, "inverse")
        if kind != "cape":
            v = apply_operator(ops, v, "inverse")
    logits = q @ np.swapaxes(k, -1, -2) / np.sqrt(q.shape[-1])
    out = _softmax(logits) @ v
    if kind not in ("none", "cape"):
        out = apply_operator(ops, out, "direct")
    return out


@dataclass(frozen=True)
class AdapterConfig:
    """Low-rank adapter shape: compression C, head count, placement."""

    compression: int = 8
    heads: int = 1
    placement: str = "parallel"
    latup_bias: bool = True

    def __post_init__(self):
        if self.placement not in PLACEMENTS:
            raise InputError(f"unknown adapter placement {self.placement!r}")
        if self.compression < 1 or self.heads < 1:
            raise InputError("compression and heads must be positive")


@dataclass(frozen=True)
class AttentionConfig:
    """Shape and encoding choice for one attention block."""

    model_dim: int
    heads: int
    kind: str = "none"
    adapter: AdapterConfig | None = None
    rope_base: float = 10000.0

    def __post_init__(self):
        if self.model_dim % self.heads != 0:
            raise InputError("model_dim must be divisible by heads")
        if self.kind != "none" and self.kind not in ENCODING_KINDS:
            raise InputError(f"unknown encoding kind {self.kind!r}")
        if self.adapter is not None:
            a = self.adapter
            if self.model_dim % a.compression != 0:
                raise InputError("model_dim must be divisible by compression")
            dim = self.model_dim // a.compression
            if dim % a.heads != 0:
                raise InputError("adapter dim must be divisible by adapter heads")
            if self.kind != "none":
                try:
                    # Raises when the kind's layout cannot split this head dim.
                    _layout(
                        dim // a.heads,
                        1.0 if self.kind in ("cape", "ucpe_ray") else 0.5,
                    )
                except GeometryError as e:
                    raise InputError(str(e)) from e

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads

    @property
    def adapter_dim(self) -> int:
        if self.adapter is None:
            raise InputError("config has no adapter")
        return self.model_dim // self.adapter.compression

    @property
    def adapter_head_dim(self) -> int:
        return self.adapter_dim // self.adapter.heads


@dataclass
class WeightSet:
    """Matrices for one block: base attention, adapter, lat/up bias.

    Row-vector convention: features are (T, d) and project as x @ W, so
    every matrix is (in_dim, out_dim). ``up`` starts all-zero.
    """

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    pq: np.ndarray
    pk: np.ndarray
    pv: np.ndarray
    up: np.ndarray
    latup: np.ndarray | None

    @staticmethod
    def seeded(cfg: AttentionConfig, seed: int, random_up: bool = False) -> "WeightSet":
        """Gaussian init scaled by 1/sqrt(fan_in); zero up-projection.

        ``random_up`` fills the up-projection too, for exercising the
        adapter path in tests; real initialization keeps it zero.
        """
        rng = np.random.Generator(np.random.Philox(seed))
        d = cfg.model_dim
        a = cfg.adapter_dim if cfg.adapter is not None else d
        def mat(n_in, n_out):
            return rng.normal(size=(n_in, n_out)) / np.sqrt(n_in)
        up = mat(a, d) if random_up else np.zeros((a, d))
        with_latup = cfg.adapter is not None and cfg.adapter.latup_bias
        return WeightSet(
            wq=mat(d, d), wk=mat(d, d), wv=mat(d, d), wo=mat(d, d),
            pq=mat(d, a), pk=mat(d, a), pv=mat(d, a),
            up=up, latup=mat(3, d) if with_latup else None,
        )

    def tensors(self) -> dict:
        out = {
            "wq": self.wq, "wk": self.wk, "wv": self.wv, "wo": self.wo,
            "pq": self.pq, "pk": self.pk, "pv": self.pv, "up": self.up,
        }
        if self.latup is not None:
            out["latup"] = self.latup
        return out

    @staticmethod
    def from_tensors(tensors: dict) -> "WeightSet":
        missing = {"wq", "wk", "wv", "wo", "pq", "pk", "pv", "up"} - set(tensors)
        if missing:
            raise InputError(f"weight set missing tensors: {sorted(missing)}")
        arrs = {k: np.asarray(v, dtype=np.float64) for k, v in tensors.items()}
        arrs.setdefault("latup", None)
        return WeightSet(**arrs)


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    t, d = x.shape
    return x.reshape(t, heads, d // heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    h, t, dh = x.shape
    return x.transpose(1, 0, 2).reshape(t, h * dh)


def base_attention(x: np.ndarray, cfg: AttentionConfig, weights: WeightSet) -> np.ndarray:
    """Plain multi-head attention of the hosted base block (no operators)."""
    q = _split_heads(x @ weights.wq, cfg.heads)
    k = _split_heads(x @ weights.wk, cfg.heads)
    v = _split_heads(x @ weights.wv, cfg.heads)
    return _merge_heads(attend(q, k, v)) @ weights.wo


def adapter_path(
    x: np.ndarray,
    ops: TokenOperatorSet | None,
    latup: np.ndarray | None,
    cfg: AttentionConfig,
    weights: WeightSet,
) -> np.ndarray:
    """The raw adapter branch: bias, down-project, attend, up-project."""
    if cfg.adapter is None:
        raise InputError("adapter_path requires an adapter config")
    x = np.asarray(x, dtype=np.float64)
    if cfg.adapter.latup_bias and latup is not None and weights.latup is not None:
        x = x + np.asarray(latup, dtype=np.float64) @ weights.latup
    heads = cfg.adapter.heads
    q = _split_heads(x @ weights.pq, heads)
    k = _split_heads(x @ weights.pk, heads)
    v = _split_heads(x @ weights.pv, heads)
    if cfg.kind == "none":
        ops = None
    elif ops is not None and ops.head_dim != cfg.adapter_head_dim:
        raise InputError(
            f"operators built for head_dim {ops.head_dim}, adapter uses {cfg.adapter_head_dim}"
        )
    out = _merge_heads(attend(q, k, v, ops, cfg.kind))
    return out @ weights.up


def adapter_block(
    x: np.ndarray,
    base_out: np.ndarray,
    ops: TokenOperatorSet | None,
    latup: np.ndarray | None,
    cfg: AttentionConfig,
    weights: WeightSet,
) -> np.ndarray:
    """Combine the adapter branch with a precomputed base output.

    parallel: base_out + path(x); post: base_out + path(base_out);
    pre: x + path(x), which the caller then feeds into base attention.
    With a zero up-projection all placements return the base path
    unchanged.
    """
    placement = cfg.adapter.placement if cfg.adapter else "parallel"
    if placement == "parallel":
        return base_out + adapter_path(x, ops, latup, cfg, weights)
    if placement == "post":
        return base_out + adapter_path(base_out, ops, latup, cfg, weights)
    return x + adapter_path(x, ops, latup, cfg, weights)


def attention_block(
    x: np.ndarray,
    cfg: AttentionConfig,
    weights: WeightSet,
    ops: TokenOperatorSet | None = None,
    latup: np.ndarray | None = None,
) -> np.ndarray:
    """Full block: hosted base attention combined with the adapter branch."""
    x = np.asarray(x, dtype=np.float64)
    if cfg.adapter is None:
        return base_attention(x, cfg, weights)
    placement = cfg.adapter.placement
    if placement == "pre":
        return base_attention(adapter_block(x, x, ops, latup, cfg, weights), cfg, weights)
    base_out = base_attention(x, cfg, weights)
    return adapter_block(x, base_out, ops, latup, cfg, weights)


def adapter_param_count(
    model_dim: int,
    compression: int,
    latup_bias: bool = True,
    blocks: int = 1,
) -> int:
    """Trainable parameters of the adapter stack, from shapes alone.

    Per block: three down-projections d x (d/C), one up-projection
    (d/C) x d, and the optional 3 x d lat/up bias.
    """
    a = model_dim // compression
    per_block = 4 * model_dim * a + (3 * model_dim if latup_bias else 0)
    return per_block * blocks


def full_attention_param_count(model_dim: int, blocks: int = 1) -> int:
    """Parameters of full-dimension attention (wq, wk, wv, wo) per stack."""
    return 4 * model_dim * model_dim * blocks
