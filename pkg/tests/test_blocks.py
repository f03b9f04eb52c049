"""Residual blocks, MLP sizing, stochastic depth, class attention."""

import numpy as np
import pytest

from outlooker import (
    ClassAttentionBlock,
    ConvBlock,
    LayerNorm,
    LocalAttentionBlock,
    Mlp,
    OutlookerBlock,
    Tensor,
    TransformerBlock,
    drop_path_schedule,
    mlp_hidden,
    ops,
    stochastic_depth_mask,
)
from outlooker.errors import ContractError, ShapeError


class TestMlpSizing:
    def test_exact_ratios(self):
        assert mlp_hidden(192, 3.0) == 576
        assert mlp_hidden(384, 4.0) == 1536

    def test_fractional_hidden_rejected(self):
        with pytest.raises(ShapeError):
            mlp_hidden(10, 0.15)

    def test_mlp_forward_matches_composition(self, rng):
        mlp = Mlp(np.random.default_rng(0), 8, 3.0, dtype=np.float64)
        x = Tensor(rng.standard_normal((5, 8)), dtype=np.float64)
        want = ops.linear(ops.gelu(ops.linear(x, mlp.w1, mlp.b1)), mlp.w2, mlp.b2)
        np.testing.assert_allclose(mlp.forward(x).data, want.data)


class TestStochasticDepth:
    def test_rate_zero_keeps_everything(self, rng):
        mask = stochastic_depth_mask(0.0, 16, rng)
        np.testing.assert_allclose(mask, np.ones(16))

    def test_values_are_zero_or_rescaled(self, rng):
        rate = 0.3
        mask = stochastic_depth_mask(rate, 4000, rng)
        keep = 1.0 / (1.0 - rate)
        assert set(np.round(np.unique(mask), 10)) <= {0.0, round(keep, 10)}
        assert abs(mask.mean() - 1.0) < 0.05

    def test_rate_one_rejected(self, rng):
        with pytest.raises(ContractError):
            stochastic_depth_mask(1.0, 4, rng)

    def test_schedule_ramps_linearly(self):
        sched = drop_path_schedule(0.3, 4)
        np.testing.assert_allclose(sched, [0.0, 0.1, 0.2, 0.3])
        assert drop_path_schedule(0.5, 1) == [0.0]
        assert drop_path_schedule(0.0, 3) == [0.0, 0.0, 0.0]


class TestLayerNormModule:
    def test_matches_op(self, rng):
        norm = LayerNorm(6, dtype=np.float64)
        x = Tensor(rng.standard_normal((4, 6)), dtype=np.float64)
        want = ops.layer_norm(x, norm.gamma, norm.beta, norm.eps)
        np.testing.assert_allclose(norm(x).data, want.data)


@pytest.mark.parametrize(
    "build,shape",
    [
        (lambda rng: OutlookerBlock(rng, 8, 2, 3, 2, 3.0), (6, 6, 8)),
        (lambda rng: LocalAttentionBlock(rng, 8, 2, 3, 3.0), (6, 6, 8)),
        (lambda rng: ConvBlock(rng, 8, 3, 3.0), (6, 6, 8)),
        (lambda rng: TransformerBlock(rng, 8, 2, 3.0), (12, 8)),
    ],
)
class TestResidualBlocks:
    def test_shape_preserved(self, build, shape, rng):
        block = build(np.random.default_rng(0))
        x = Tensor(rng.standard_normal(shape).astype(np.float32))
        assert block.forward(x).shape == shape

    def test_inference_deterministic(self, build, shape, rng):
        block = build(np.random.default_rng(0))
        x = Tensor(rng.standard_normal(shape).astype(np.float32))
        a = block.forward(x, training=False).data
        b = block.forward(x, training=False).data
        np.testing.assert_array_equal(a, b)


class TestDropPathPlumbing:
    def test_training_with_rate_requires_rng(self, rng):
        block = TransformerBlock(np.random.default_rng(0), 8, 2, 3.0, drop_path=0.5)
        x = Tensor(rng.standard_normal((4, 8)).astype(np.float32))
        with pytest.raises(ContractError):
            block.forward(x, training=True)

    def test_dropped_branches_leave_identity(self, rng):
        # rate ~ 1 - eps: both branches almost surely dropped
        block = TransformerBlock(np.random.default_rng(0), 8, 2, 3.0, drop_path=1.0 - 1e-9)
        x = Tensor(rng.standard_normal((4, 8)).astype(np.float32))
        out = block.forward(x, training=True, rng=np.random.default_rng(1))
        np.testing.assert_allclose(out.data, x.data)

    def test_invalid_rate_rejected(self):
        with pytest.raises(ContractError):
            TransformerBlock(np.random.default_rng(0), 8, 2, 3.0, drop_path=1.0)


class TestClassAttention:
    def test_updates_only_the_class_token(self, rng):
        block = ClassAttentionBlock(np.random.default_rng(0), 8, 2, 3.0, dtype=np.float64)
        cls_token = Tensor(rng.standard_normal((1, 8)), dtype=np.float64)
        patches = Tensor(rng.standard_normal((9, 8)), dtype=np.float64)
        out = block.forward(cls_token, patches)
        assert out.shape == (1, 8)
        assert not np.allclose(out.data, cls_token.data)

    def test_patch_permutation_equivariance_of_cls(self, rng):
        # the class token attends over an unordered set: permuting patches
        # must not change its update
        block = ClassAttentionBlock(np.random.default_rng(0), 8, 2, 3.0, dtype=np.float64)
        cls_token = Tensor(rng.standard_normal((1, 8)), dtype=np.float64)
        patches = rng.standard_normal((9, 8))
        out1 = block.forward(cls_token, Tensor(patches, dtype=np.float64)).data
        out2 = block.forward(cls_token, Tensor(patches[::-1].copy(), dtype=np.float64)).data
        np.testing.assert_allclose(out1, out2, atol=1e-12)

    def test_shape_contract(self, rng):
        block = ClassAttentionBlock(np.random.default_rng(0), 8, 2, 3.0)
        with pytest.raises(ShapeError):
            block.forward(Tensor(rng.standard_normal((2, 8)).astype(np.float32)),
                          Tensor(rng.standard_normal((9, 8)).astype(np.float32)))
