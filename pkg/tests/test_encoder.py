"""Encoder shapes, determinism, masking invariances, and gradient checks."""

import numpy as np
import pytest
import torch

from infoaug.encoder import ClassifierHead, DilatedConvEncoder, EncoderConfig, encode_batches
from infoaug.infotheory import finite_difference_gradient


def _tiny_encoder(depth=2, channels=4, repr_dim=8, n_features=1, pooling="max", seed=0):
    torch.manual_seed(seed)
    return DilatedConvEncoder(
        EncoderConfig(
            input_dim=n_features,
            channels=channels,
            depth=depth,
            output_dim=repr_dim,
            pooling=pooling,
        )
    )


class TestConfig:
    def test_receptive_field_of_default_stack(self):
        # One conv per block, kernel 3, dilations 2^0..2^9:
        # 1 + 2 * (2^10 - 1) = 2047 input timestamps.
        config = EncoderConfig(input_dim=1)
        assert config.depth == 10
        assert config.receptive_field() == 2047

    def test_receptive_field_small(self):
        config = EncoderConfig(input_dim=1, depth=2)
        assert config.receptive_field() == 1 + 2 * (1 + 2)

    def test_invalid_configs_rejected(self):
        with pytest.raises(ValueError):
            EncoderConfig(input_dim=1, depth=0)
        with pytest.raises(ValueError):
            EncoderConfig(input_dim=1, kernel=4)
        with pytest.raises(ValueError):
            EncoderConfig(input_dim=1, pooling="sum")


class TestForward:
    def test_output_shape(self):
        enc = _tiny_encoder(repr_dim=12)
        for t in (8, 33, 100):
            out = enc(torch.randn(5, t, 1))
            assert out.shape == (5, 12)

    def test_identical_instances_identical_rows(self):
        enc = _tiny_encoder()
        x = torch.randn(1, 40, 1).repeat(3, 1, 1)
        out = enc(x)
        assert torch.equal(out[0], out[1])
        assert torch.equal(out[1], out[2])

    def test_feature_mismatch_rejected(self):
        enc = _tiny_encoder(n_features=2)
        with pytest.raises(ValueError, match="features"):
            enc(torch.randn(2, 16, 3))

    def test_masked_padding_invariance(self):
        enc = _tiny_encoder(seed=1).double()
        x = torch.randn(3, 20, 1, dtype=torch.float64)
        mask = torch.ones(3, 20, 1, dtype=torch.bool)
        base = enc(x, mask)
        padded_x = torch.cat([x, torch.zeros(3, 7, 1, dtype=torch.float64)], dim=1)
        padded_mask = torch.cat([mask, torch.zeros(3, 7, 1, dtype=torch.bool)], dim=1)
        out = enc(padded_x, padded_mask)
        torch.testing.assert_close(out, base, atol=1e-9, rtol=0)

    def test_mean_pooling_padding_invariance(self):
        enc = _tiny_encoder(pooling="mean", seed=2).double()
        x = torch.randn(2, 16, 1, dtype=torch.float64)
        mask = torch.ones(2, 16, 1, dtype=torch.bool)
        base = enc(x, mask)
        padded_x = torch.cat([x, torch.zeros(2, 5, 1, dtype=torch.float64)], dim=1)
        padded_mask = torch.cat([mask, torch.zeros(2, 5, 1, dtype=torch.bool)], dim=1)
        torch.testing.assert_close(enc(padded_x, padded_mask), base, atol=1e-9, rtol=0)


class TestSubsequences:
    def test_window_count(self):
        enc = _tiny_encoder(repr_dim=6)
        out = enc.encode_subsequences(torch.randn(2, 600, 1), None, 200)
        assert out.shape == (2, 3, 6)

    def test_rows_match_independent_encoding(self):
        enc = _tiny_encoder(seed=3)
        x = torch.randn(1, 64, 1)
        sub = enc.encode_subsequences(x, None, 16)[0]
        for w in range(4):
            window = x[:, w * 16 : (w + 1) * 16]
            torch.testing.assert_close(sub[w], enc(window)[0])

    def test_constant_encoder_identical_rows(self):
        enc = _tiny_encoder(seed=4)
        with torch.no_grad():
            for p in enc.parameters():
                p.zero_()
        sub = enc.encode_subsequences(torch.randn(1, 48, 1), None, 16)[0]
        assert torch.equal(sub[0], sub[1])
        assert torch.equal(sub[1], sub[2])

    def test_too_short_length_rejected(self):
        enc = _tiny_encoder()
        with pytest.raises(ValueError):
            enc.encode_subsequences(torch.randn(1, 8, 1), None, 1)


class TestClassifierHead:
    def test_zero_head_uniform_logits(self):
        head = ClassifierHead(8, 4)
        with torch.no_grad():
            head.linear.weight.zero_()
            head.linear.bias.zero_()
        logits = head(torch.randn(3, 8))
        torch.testing.assert_close(logits, torch.zeros(3, 4))
        probs = torch.softmax(logits, dim=1)
        torch.testing.assert_close(probs, torch.full((3, 4), 0.25))

    def test_logit_shape(self):
        head = ClassifierHead(16, 5)
        assert head(torch.randn(7, 16)).shape == (7, 5)

    def test_width_mismatch_rejected(self):
        head = ClassifierHead(16, 5)
        with pytest.raises(ValueError, match="width"):
            head(torch.randn(7, 8))

    def test_argmax_invariant_to_positive_scaling(self):
        # A head that selects axis k keeps argmax k for any positive scale.
        head = ClassifierHead(4, 4)
        with torch.no_grad():
            head.linear.weight.copy_(torch.eye(4))
            head.linear.bias.zero_()
        z = torch.tensor([[0.1, 0.9, 0.2, 0.3]])
        for scale in (0.5, 1.0, 10.0, 1000.0):
            assert int(head(z * scale).argmax()) == 1


class TestGradients:
    def test_encoder_parameters_match_finite_differences(self):
        torch.manual_seed(5)
        enc = _tiny_encoder(depth=2, channels=4, repr_dim=4).double()
        x = torch.randn(3, 16, 1, dtype=torch.float64)
        target = torch.randn(3, 4, dtype=torch.float64)
        params = [p for p in enc.parameters() if p.requires_grad]

        def loss_fn():
            return ((enc(x) - target) ** 2).sum()

        loss = loss_fn()
        grads = torch.autograd.grad(loss, params)

        # Spot-check a handful of coordinates of each parameter tensor.
        rng = np.random.default_rng(6)
        for param, grad in zip(params, grads):
            flat = param.detach().reshape(-1)
            gflat = grad.reshape(-1)
            for idx in rng.choice(flat.numel(), size=min(3, flat.numel()), replace=False):
                def fn(value):
                    with torch.no_grad():
                        original = flat[idx].item()
                        flat[idx] = float(value[0])
                        out = float(loss_fn())
                        flat[idx] = original
                    return out

                numeric = finite_difference_gradient(fn, np.array([flat[idx].item()]), h=1e-4)[0]
                assert float(gflat[idx]) == pytest.approx(numeric, rel=1e-3, abs=1e-8)


class TestEncodeBatches:
    def test_batched_equals_single_pass(self):
        enc = _tiny_encoder(seed=7)
        values = np.random.default_rng(8).normal(size=(10, 24, 1))
        full = encode_batches(enc, values, batch_size=64)
        chunked = encode_batches(enc, values, batch_size=3)
        np.testing.assert_allclose(full, chunked, atol=1e-6)
