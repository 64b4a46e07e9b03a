import numpy as np
import pytest

from camray.attention import (
    PLACEMENTS,
    REFERENCE_PIPELINE_PARAMS,
    AdapterConfig,
    AttentionConfig,
    WeightSet,
    adapter_block,
    adapter_param_count,
    apply_operator,
    attend,
    attention_block,
    base_attention,
    full_attention_param_count,
)
from camray.cameras import CameraModel
from camray.encodings import TokenGrid, TokenOperatorSet, build_operators, latup_tokens
from camray.errors import GeometryError, InputError
from camray.geometry import compose
from camray.synthesis import make_rng
from conftest import random_pose

CAM = CameraModel("ucm", 832, 480, xfov_deg=140.0, xi=0.95)


def small_operators(kind, n_frames=2, rows=2, cols=2, head_dim=8, seed=5):
    rng = make_rng(seed)
    cam = CameraModel("pinhole", 832, 480, xfov_deg=90.0) if kind == "prope" else CAM
    poses = [random_pose(rng) for _ in range(n_frames)]
    grid = TokenGrid.regular(n_frames, rows, cols, cam.width, cam.height)
    ops = build_operators(kind, [cam] * n_frames, poses, grid, head_dim)
    return ops, poses, grid, cam


def dense_matrix(op):
    """Oracle: materialize a token operator as one dense head_dim matrix."""
    d = op.head_dim
    m = np.zeros((d, d))
    for j in range(op.ray_dim // 4):
        m[4 * j:4 * (j + 1), 4 * j:4 * (j + 1)] = op.ray_block
    for j, ang in enumerate(op.rope):
        c, s = np.cos(ang), np.sin(ang)
        o = op.ray_dim + 2 * j
        m[o:o + 2, o:o + 2] = [[c, -s], [s, c]]
    return m


def reference_softmax_attention(q, k, v):
    logits = q @ k.T / np.sqrt(q.shape[-1])
    w = np.exp(logits - logits.max(axis=-1, keepdims=True))
    w = w / w.sum(axis=-1, keepdims=True)
    return w @ v


class TestApplyOperator:
    @pytest.mark.parametrize("kind", ["cape", "gta", "ucpe_ray", "ucpe_hybrid"])
    def test_modes_match_dense_oracle(self, kind, rng):
        ops, *_ = small_operators(kind)
        x = rng.normal(size=(len(ops), ops.head_dim))
        mats = [dense_matrix(ops[i]) for i in range(len(ops))]
        for mode, f in [
            ("direct", lambda m: m),
            ("transpose", lambda m: m.T),
            ("inverse", np.linalg.inv),
        ]:
            got = apply_operator(ops, x, mode)
            want = np.stack([f(mats[i]) @ x[i] for i in range(len(ops))])
            np.testing.assert_allclose(got, want, atol=1e-10)

    def test_direct_then_inverse_is_identity(self, rng):
        ops, *_ = small_operators("gta")
        x = rng.normal(size=(len(ops), ops.head_dim))
        back = apply_operator(ops, apply_operator(ops, x, "direct"), "inverse")
        np.testing.assert_allclose(back, x, atol=1e-9)

    def test_single_operator_accepted(self, rng):
        ops, *_ = small_operators("cape")
        x = rng.normal(size=(4, ops.head_dim))
        got = apply_operator(ops[2], x)
        want = (dense_matrix(ops[2]) @ x.T).T
        np.testing.assert_allclose(got, want, atol=1e-10)

    def test_batch_dims_broadcast(self, rng):
        ops, *_ = small_operators("ucpe_hybrid")
        x = rng.normal(size=(3, 2, len(ops), ops.head_dim))
        got = apply_operator(ops, x)
        want = apply_operator(ops, x[1, 1])
        np.testing.assert_allclose(got[1, 1], want, atol=1e-12)

    def test_unknown_mode(self, rng):
        ops, *_ = small_operators("cape")
        with pytest.raises(InputError):
            apply_operator(ops, rng.normal(size=(len(ops), ops.head_dim)), "sideways")

    def test_rejects_mismatched_feature_dim(self, rng):
        ops, *_ = small_operators("cape")
        with pytest.raises(InputError):
            apply_operator(ops, rng.normal(size=(len(ops), ops.head_dim + 2)))


class TestAttend:
    def test_plain_matches_reference(self, rng):
        q, k, v = (rng.normal(size=(6, 8)) for _ in range(3))
        np.testing.assert_allclose(
            attend(q, k, v), reference_softmax_attention(q, k, v), atol=1e-12
        )

    @pytest.mark.parametrize("kind", ["cape", "gta", "prope", "ucpe_ray", "ucpe_hybrid"])
    def test_matches_dense_oracle(self, kind, rng):
        ops, *_ = small_operators(kind)
        t, dh = len(ops), ops.head_dim
        q, k, v = (rng.normal(size=(t, dh)) for _ in range(3))
        mats = [dense_matrix(ops[i]) for i in range(t)]
        qd = np.stack([mats[i].T @ q[i] for i in range(t)])
        kd = np.stack([np.linalg.inv(mats[i]) @ k[i] for i in range(t)])
        if kind == "cape":
            want = reference_softmax_attention(qd, kd, v)
        else:
            vd = np.stack([np.linalg.inv(mats[i]) @ v[i] for i in range(t)])
            raw = reference_softmax_attention(qd, kd, vd)
            want = np.stack([mats[i] @ raw[i] for i in range(t)])
        np.testing.assert_allclose(attend(q, k, v, ops, kind), want, atol=1e-10)

    def test_identity_operators_reduce_to_plain(self, rng):
        q, k, v = (rng.normal(size=(6, 8)) for _ in range(3))
        ops = TokenOperatorSet.identity(6, 8, 4)
        for kind in ("cape", "gta", "ucpe_ray", "ucpe_hybrid"):
            np.testing.assert_allclose(
                attend(q, k, v, ops, kind), attend(q, k, v), atol=1e-12
            )

    def test_kind_none_rejects_operators(self, rng):
        q, k, v = (rng.normal(size=(6, 8)) for _ in range(3))
        ops = TokenOperatorSet.identity(6, 8, 4)
        with pytest.raises(InputError):
            attend(q, k, v, ops, "none")
        with pytest.raises(InputError):
            attend(q, k, v, None, "gta")

    @pytest.mark.parametrize("kind", ["gta", "ucpe_ray", "ucpe_hybrid"])
    def test_world_frame_invariance(self, kind, rng):
        ops, poses, grid, cam = small_operators(kind)
        t, dh = len(ops), ops.head_dim
        q, k, v = (rng.normal(size=(t, dh)) for _ in range(3))
        base = attend(q, k, v, ops, kind)
        for _ in range(3):
            g = random_pose(rng)
            moved = [compose(g, p) for p in poses]
            ops_g = build_operators(kind, [cam] * 2, moved, grid, dh)
            out = attend(q, k, v, ops_g, kind)
            assert np.abs(out - base).max() < 1e-8 * max(1.0, np.abs(base).max())


class TestConfigs:
    def test_head_dims(self):
        cfg = AttentionConfig(64, 2, "ucpe_hybrid", AdapterConfig(8, 1))
        assert cfg.head_dim == 32
        assert cfg.adapter_dim == 8
        assert cfg.adapter_head_dim == 8

    def test_model_dim_must_divide(self):
        with pytest.raises(InputError):
            AttentionConfig(65, 2)

    def test_adapter_head_dim_layout_checked(self):
        # 64 / 16 = 4-dim adapter: too small to split half ray, half rope.
        with pytest.raises(InputError):
            AttentionConfig(64, 2, "ucpe_hybrid", AdapterConfig(16, 1))

    def test_unknown_kind(self):
        with pytest.raises(InputError):
            AttentionConfig(64, 2, "fourier")

    def test_unknown_placement(self):
        with pytest.raises(InputError):
            AdapterConfig(8, 1, placement="inline")


class TestWeightSet:
    def cfg(self):
        return AttentionConfig(64, 2, "ucpe_hybrid", AdapterConfig(8, 1))

    def test_seeded_is_deterministic(self):
        a = WeightSet.seeded(self.cfg(), 3)
        b = WeightSet.seeded(self.cfg(), 3)
        for name, t in a.tensors().items():
            np.testing.assert_array_equal(t, b.tensors()[name])

    def test_different_seeds_differ(self):
        a = WeightSet.seeded(self.cfg(), 3)
        b = WeightSet.seeded(self.cfg(), 4)
        assert np.abs(a.wq - b.wq).max() > 0

    def test_up_projection_zero_by_default(self):
        w = WeightSet.seeded(self.cfg(), 3)
        np.testing.assert_array_equal(w.up, 0.0)
        w2 = WeightSet.seeded(self.cfg(), 3, random_up=True)
        assert np.abs(w2.up).max() > 0

    def test_tensor_round_trip(self):
        w = WeightSet.seeded(self.cfg(), 3)
        w2 = WeightSet.from_tensors(w.tensors())
        np.testing.assert_array_equal(w.latup, w2.latup)


def _setup_block(kind="ucpe_hybrid", placement="parallel", seed=11, model_dim=64):
    cfg = AttentionConfig(
        model_dim, 2, kind, AdapterConfig(8, 1, placement=placement)
    )
    rng = make_rng(seed)
    n_frames = 2
    poses = [random_pose(rng) for _ in range(n_frames)]
    grid = TokenGrid.regular(n_frames, 2, 2, CAM.width, CAM.height)
    ops = build_operators(kind, [CAM] * n_frames, poses, grid, cfg.adapter_head_dim)
    latup, _ = latup_tokens([CAM] * n_frames, poses, grid)
    x = rng.normal(size=(len(grid), model_dim))
    return cfg, ops, latup, x


class TestAdapterBlock:
    @pytest.mark.parametrize("placement", PLACEMENTS)
    def test_zero_init_is_noop(self, placement):
        cfg, ops, latup, x = _setup_block(placement=placement)
        w = WeightSet.seeded(cfg, 7)
        base = base_attention(x, cfg, w)
        out = attention_block(x, cfg, w, ops, latup)
        np.testing.assert_allclose(out, base, atol=1e-12)

    def test_trained_up_projection_changes_output(self):
        cfg, ops, latup, x = _setup_block()
        w = WeightSet.seeded(cfg, 7, random_up=True)
        out = attention_block(x, cfg, w, ops, latup)
        base = base_attention(x, cfg, w)
        assert np.abs(out - base).max() > 1e-6

    def test_parallel_and_post_differ_once_trained(self):
        cfg_par, ops, latup, x = _setup_block(placement="parallel")
        cfg_post, *_ = _setup_block(placement="post")
        w = WeightSet.seeded(cfg_par, 7, random_up=True)
        a = attention_block(x, cfg_par, w, ops, latup)
        b = attention_block(x, cfg_post, w, ops, latup)
        assert np.abs(a - b).max() > 1e-9

    def test_adapter_block_composes_base_and_path(self):
        cfg, ops, latup, x = _setup_block(placement="parallel")
        w = WeightSet.seeded(cfg, 7, random_up=True)
        base = base_attention(x, cfg, w)
        got = adapter_block(x, base, ops, latup, cfg, w)
        np.testing.assert_allclose(got, attention_block(x, cfg, w, ops, latup))

    def test_latup_disabled(self):
        cfg = AttentionConfig(64, 2, "gta", AdapterConfig(8, 1, latup_bias=False))
        rng = make_rng(3)
        poses = [random_pose(rng) for _ in range(2)]
        grid = TokenGrid.regular(2, 2, 2, CAM.width, CAM.height)
        ops = build_operators("gta", [CAM] * 2, poses, grid, cfg.adapter_head_dim)
        w = WeightSet.seeded(cfg, 5)
        assert w.latup is None
        x = rng.normal(size=(len(grid), 64))
        out = attention_block(x, cfg, w, ops, latup=None)
        np.testing.assert_allclose(out, base_attention(x, cfg, w), atol=1e-12)


class TestParamCounts:
    def test_weight_set_matches_formula(self):
        cfg = AttentionConfig(64, 2, "ucpe_hybrid", AdapterConfig(8, 1))
        w = WeightSet.seeded(cfg, 0)
        adapter_tensors = [w.pq, w.pk, w.pv, w.up, w.latup]
        total = sum(t.size for t in adapter_tensors)
        assert total == adapter_param_count(64, 8)

    def test_reference_scale_budget(self):
        stack = adapter_param_count(1536, 8, latup_bias=True, blocks=30)
        assert stack == 35_527_680
        assert stack / REFERENCE_PIPELINE_PARAMS < 0.01

    def test_full_attention_count(self):
        assert full_attention_param_count(1536, 1) == 4 * 1536 * 1536

    def test_compression_table(self):
        # model_dim 1536: adapter width divides into heads of 128 or fewer.
        for c, width in [(2, 768), (4, 384), (8, 192), (12, 128)]:
            cfg = AttentionConfig(1536, 12, "gta", AdapterConfig(c, width // 128 or 1))
            assert cfg.adapter_dim == width
