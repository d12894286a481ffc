import numpy as np
import pytest

from mewehv.neuralcore import Tensor, finite_difference_check
from mewehv.neuralcore.layers import (BatchNorm1dLayer, Conv1dLayer, LinearLayer,
                                      LstmLayer, SoftAttention, dropout)


# -- parameter counts (reference architecture values) ----------------------

def test_conv_param_counts():
    assert Conv1dLayer(128, 128, 5, 2).param_count() == 82048
    assert Conv1dLayer(128, 128, 4, 1).param_count() == 65664


def test_batchnorm_param_count():
    assert BatchNorm1dLayer(128).param_count() == 256


def test_lstm_param_counts():
    assert LstmLayer(128, 128).param_count() == 132096
    assert LstmLayer(1024, 128).param_count() == 590848
    assert LstmLayer(768, 128).param_count() == 459776


def test_attention_param_count():
    assert SoftAttention(128).param_count() == 16512


def test_linear_param_count_is_weight_only():
    layer = LinearLayer(256, 256)
    assert layer.param_count() == 65536
    assert layer.bias_count() == 256
    assert LinearLayer(256, 6).param_count() == 1536


# -- conv -------------------------------------------------------------------

def test_conv_output_lengths():
    assert Conv1dLayer(128, 128, 5, 2).out_length(641) == 319
    assert Conv1dLayer(128, 128, 4, 1).out_length(319) == 316
    assert Conv1dLayer(128, 128, 4, 1).out_length(316) == 313


def test_conv_rejects_short_input():
    conv = Conv1dLayer(2, 2, kernel=5)
    with pytest.raises(ValueError):
        conv.forward(Tensor(np.zeros((1, 2, 4))))


def test_conv_identity_kernel():
    conv = Conv1dLayer(3, 3, kernel=1, stride=1)
    conv.weight.data[...] = np.eye(3).reshape(3, 3, 1)
    conv.bias.data[...] = 0.0
    x = np.random.default_rng(0).normal(size=(2, 3, 7))
    out = conv.forward(Tensor(x))
    assert np.allclose(out.data, x)


@pytest.mark.parametrize("seed", range(10))
def test_conv_gradients(seed):
    rng = np.random.default_rng(seed)
    conv = Conv1dLayer(3, 4, kernel=3, stride=2, rng=rng)
    x = Tensor(rng.normal(size=(2, 3, 9)))

    def loss_of_input(t):
        out = conv.forward(t)
        return (out * out).sum()

    assert finite_difference_check(loss_of_input, x) < 1e-4
    for _, p in conv.named_parameters():
        err = finite_difference_check(
            lambda q: (lambda o: (o * o).sum())(conv.forward(Tensor(x.data))), p)
        assert err < 1e-4


# -- batchnorm ----------------------------------------------------------------

def test_batchnorm_train_statistics():
    rng = np.random.default_rng(0)
    bn = BatchNorm1dLayer(4)
    bn.gamma.data[...] = rng.uniform(0.5, 2.0, 4)
    bn.beta.data[...] = rng.normal(size=4)
    x = Tensor(rng.normal(loc=3.0, scale=2.5, size=(8, 4, 16)))
    out = bn.forward(x, training=True).data
    mean = out.mean(axis=(0, 2))
    std = out.std(axis=(0, 2))
    assert np.allclose(mean, bn.beta.data, atol=1e-5)
    assert np.allclose(std, bn.gamma.data, atol=1e-3)


def test_batchnorm_eval_identity_stats():
    bn = BatchNorm1dLayer(3)
    x = np.random.default_rng(1).normal(size=(2, 3, 5))
    out = bn.forward(Tensor(x), training=False).data
    assert np.allclose(out, x / np.sqrt(1 + bn.eps))


def test_batchnorm_zero_variance_is_finite():
    bn = BatchNorm1dLayer(2)
    out = bn.forward(Tensor(np.ones((2, 2, 4))), training=True).data
    assert np.all(np.isfinite(out))


def test_batchnorm_needs_two_values_in_train_mode():
    bn = BatchNorm1dLayer(2)
    with pytest.raises(ValueError):
        bn.forward(Tensor(np.ones((1, 2, 1))), training=True)


@pytest.mark.parametrize("seed", range(10))
def test_batchnorm_gradients(seed):
    rng = np.random.default_rng(seed)
    bn = BatchNorm1dLayer(3)
    bn.gamma.data[...] = rng.uniform(0.5, 1.5, 3)
    weights = rng.normal(size=(2, 3, 4))

    def f(t):
        bn.running_mean[:] = 0.0
        bn.running_var[:] = 1.0
        out = bn.forward(t, training=True)
        return (out * Tensor(weights)).sum()

    x = Tensor(rng.normal(size=(2, 3, 4)))
    assert finite_difference_check(f, x) < 1e-4


# -- lstm -----------------------------------------------------------------------

def test_lstm_zero_input_zero_weights_zero_output():
    lstm = LstmLayer(4, 3)
    for _, p in lstm.named_parameters():
        p.data[...] = 0.0
    out = lstm.forward(Tensor(np.zeros((2, 5, 4))))
    assert np.allclose(out.data, 0.0)


def test_lstm_output_shape():
    lstm = LstmLayer(6, 4)
    out = lstm.forward(Tensor(np.random.default_rng(0).normal(size=(3, 7, 6))))
    assert out.shape == (3, 7, 4)


@pytest.mark.parametrize("seed", range(10))
def test_lstm_gradients(seed):
    rng = np.random.default_rng(seed)
    lstm = LstmLayer(4, 3, rng=rng)
    x = Tensor(rng.normal(size=(2, 3, 4)))
    target = rng.normal(size=(2, 3, 3))

    def loss_from(out):
        d = out - Tensor(target)
        return (d * d).sum()

    assert finite_difference_check(lambda t: loss_from(lstm.forward(t)), x) < 1e-4
    for _, p in lstm.named_parameters():
        err = finite_difference_check(
            lambda q: loss_from(lstm.forward(Tensor(x.data))), p, step=1e-5)
        assert err < 1e-4


# -- attention ---------------------------------------------------------------------

def test_attention_uniform_for_identical_steps():
    attn = SoftAttention(5, rng=np.random.default_rng(0))
    h = np.tile(np.random.default_rng(1).normal(size=(1, 1, 5)), (2, 7, 1))
    pooled, weights = attn.forward(Tensor(h))
    assert np.allclose(weights.data, 1.0 / 7)
    assert np.allclose(pooled.data, h[:, 0, :])


def test_attention_single_step_weight_one():
    attn = SoftAttention(4, rng=np.random.default_rng(2))
    h = np.random.default_rng(3).normal(size=(1, 1, 4))
    pooled, weights = attn.forward(Tensor(h))
    assert np.allclose(weights.data, 1.0)
    assert np.allclose(pooled.data, h[:, 0, :])


def test_attention_weights_normalized_arbitrary_inputs():
    attn = SoftAttention(8, rng=np.random.default_rng(4))
    h = np.random.default_rng(5).normal(scale=30.0, size=(100, 11, 8))
    _, weights = attn.forward(Tensor(h))
    assert np.all(weights.data >= 0)
    assert np.allclose(weights.data.sum(axis=1), 1.0, atol=1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_attention_gradients(seed):
    rng = np.random.default_rng(seed)
    attn = SoftAttention(4, rng=rng)
    x = Tensor(rng.normal(size=(2, 5, 4)))

    def f(t):
        pooled, _ = attn.forward(t)
        return (pooled * pooled).sum()

    assert finite_difference_check(f, x) < 1e-4
    for _, p in attn.named_parameters():
        err = finite_difference_check(
            lambda q: (lambda pair: (pair[0] * pair[0]).sum())(
                attn.forward(Tensor(x.data))), p)
        assert err < 1e-4


# -- linear / dropout ------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(10))
def test_linear_gradients(seed):
    rng = np.random.default_rng(seed)
    lin = LinearLayer(5, 3, rng=rng)
    x = Tensor(rng.normal(size=(4, 5)))
    assert finite_difference_check(
        lambda t: (lambda o: (o * o).sum())(lin.forward(t)), x) < 1e-4
    for _, p in lin.named_parameters():
        err = finite_difference_check(
            lambda q: (lambda o: (o * o).sum())(lin.forward(Tensor(x.data))), p)
        assert err < 1e-4


def test_dropout_eval_is_identity():
    x = Tensor(np.random.default_rng(0).normal(size=(100,)))
    out = dropout(x, 0.5, np.random.default_rng(1), training=False)
    assert out is x


def test_dropout_keep_fraction_and_scaling():
    rate = 0.2
    n = 40000
    x = Tensor(np.ones(n))
    out = dropout(x, rate, np.random.default_rng(2), training=True).data
    kept = out != 0.0
    # binomial 3-sigma bound on the kept fraction
    sigma = np.sqrt(rate * (1 - rate) / n)
    assert abs(kept.mean() - (1 - rate)) < 3 * sigma
    assert np.allclose(out[kept], 1.0 / (1 - rate))


def test_dropout_invalid_rate():
    with pytest.raises(ValueError):
        dropout(Tensor(np.ones(3)), 1.0, np.random.default_rng(0), training=True)
