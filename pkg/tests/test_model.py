import numpy as np
import pytest

from mewehv.model import (CenterBank, ModelError, ModelProfile, build,
                          center_loss, classify, forward_mfcc_branch,
                          forward_wave_branch, fuse, nll_loss, total_loss)
from mewehv.neuralcore import Tensor, backward, finite_difference_check

TABLE_ROWS = [82048, 256, 65664, 256, 65664, 256, 132096, 16512, 590848, 16512,
              65536, 1536]

TINY = ModelProfile(channels=4, hidden=4, dropout=0.0, conv_specs=((3, 1), (2, 1), (2, 1)))


def tiny_model(kind="mewehv", n_classes=2, width=6, seed=0):
    model, _ = build(kind, n_classes, width=width, profile=TINY, seed=seed)
    return model


# -- build and parameter accounting -------------------------------------------

def test_reference_row_counts():
    _, report = build("mewehv", 6, width=1024)
    assert [r["params"] for r in report["rows"]] == TABLE_ROWS


def test_reference_trainable_total():
    _, report = build("mewehv", 6, width=1024)
    assert report["trainable_total"] == 1038982
    assert report["linear_bias_params"] == 262
    assert report["center_params"] == 1536


def test_marginal_cost_per_extra_class():
    _, six = build("mewehv", 6, width=1024)
    _, seven = build("mewehv", 7, width=1024)
    assert seven["trainable_total"] - six["trainable_total"] == 513


def test_baseline_blocks():
    m_wave = tiny_model("waveonly")
    assert not m_wave.has_mfcc_branch and m_wave.has_wave_branch
    m_mfcc = tiny_model("cnnmfcc")
    assert m_mfcc.has_mfcc_branch and not m_mfcc.has_wave_branch
    assert m_wave.rich_dim == TINY.hidden
    assert m_mfcc.rich_dim == TINY.hidden


def test_baseline_centers_are_hidden_sized():
    model, report = build("waveonly", 6, width=1024)
    assert model.centers.centers.shape == (6, 128)
    assert report["center_params"] == 768


def test_checkpoint_parameter_names_are_stable():
    model, _ = build("mewehv", 6, width=1024)
    names = [n for n, _ in model.named_parameters()]
    assert names == [
        "mfcc_conv0.weight", "mfcc_conv0.bias", "mfcc_bn0.gamma", "mfcc_bn0.beta",
        "mfcc_conv1.weight", "mfcc_conv1.bias", "mfcc_bn1.gamma", "mfcc_bn1.beta",
        "mfcc_conv2.weight", "mfcc_conv2.bias", "mfcc_bn2.gamma", "mfcc_bn2.beta",
        "mfcc_lstm.w_ih", "mfcc_lstm.w_hh", "mfcc_lstm.b_ih", "mfcc_lstm.b_hh",
        "mfcc_attn.w", "mfcc_attn.v",
        "wave_lstm.w_ih", "wave_lstm.w_hh", "wave_lstm.b_ih", "wave_lstm.b_hh",
        "wave_attn.w", "wave_attn.v",
        "head_hidden.weight", "head_hidden.bias",
        "head_out.weight", "head_out.bias",
        "centers",
    ]
    buffers = [n for n, _ in model.named_buffers()]
    assert buffers == [
        "mfcc_bn0.running_mean", "mfcc_bn0.running_var",
        "mfcc_bn1.running_mean", "mfcc_bn1.running_var",
        "mfcc_bn2.running_mean", "mfcc_bn2.running_var",
    ]


def test_build_rejects_bad_kind_and_classes():
    with pytest.raises(ModelError):
        build("other", 4)
    with pytest.raises(ModelError):
        build("mewehv", 1)


# -- branch forwards ---------------------------------------------------------------

def test_mfcc_branch_reference_shapes():
    model, _ = build("mewehv", 6, width=1024, seed=1)
    model.eval()
    out = forward_mfcc_branch(model, np.zeros((128, 641)))
    assert out.shape == (128,)


def test_mfcc_branch_zero_weights_zero_embedding():
    model = tiny_model()
    model.eval()
    for _, p in model.named_parameters():
        p.data[...] = 0.0
    out = forward_mfcc_branch(model, np.random.default_rng(0).normal(size=(4, 12)))
    assert np.allclose(out.data, 0.0)


def test_mfcc_branch_output_dim_for_varied_lengths():
    model, _ = build("mewehv", 2, width=1024, seed=2)
    model.eval()
    for t in (17, 30, 101, 641):
        out = forward_mfcc_branch(model, np.zeros((128, t)))
        assert out.shape == (128,)


def test_mfcc_branch_names_offending_block():
    model = tiny_model()
    with pytest.raises(ModelError, match="conv set 0"):
        model.mfcc_branch(np.zeros((4, 2)))
    with pytest.raises(ModelError, match="coefficients"):
        model.mfcc_branch(np.zeros((5, 30)))


def test_wave_branch_shapes_and_width_check():
    model, _ = build("mewehv", 6, width=1024, seed=3)
    model.eval()
    out = forward_wave_branch(model, np.zeros((399, 1024)))
    assert out.shape == (128,)
    with pytest.raises(ModelError, match="width"):
        forward_wave_branch(model, np.zeros((399, 768)))


def test_wave_branch_single_frame():
    model = tiny_model()
    model.eval()
    e = np.random.default_rng(1).normal(size=(1, 6))
    out = model.wave_branch(e)
    h = model.wave_lstm.forward(Tensor(e.reshape(1, 1, 6)))
    _, weights = model.wave_attn.forward(h)
    assert np.allclose(weights.data, 1.0)
    assert np.allclose(out.data, h.data[0, 0])


# -- fuse ------------------------------------------------------------------------------

def test_fuse_layout():
    out = fuse(np.ones(128), np.zeros(128))
    assert out.shape == (256,)
    assert np.all(out.data[:128] == 1.0)
    assert np.all(out.data[128:] == 0.0)


def test_fuse_order_matters():
    a, b = np.ones(4), np.arange(4.0)
    assert not np.array_equal(fuse(a, b).data, fuse(b, a).data)


def test_fuse_gradient_splits_to_branches():
    rng = np.random.default_rng(4)
    b1 = Tensor(rng.normal(size=(3, 5)))
    b2 = Tensor(rng.normal(size=(3, 5)))
    coeff = rng.normal(size=(3, 10))

    def f(t):
        return (fuse(t, Tensor(b2.data)) * Tensor(coeff)).sum()

    assert finite_difference_check(f, b1) < 1e-6
    # gradient w.r.t. b1 equals gradient w.r.t. the first slots of the fusion
    joined = Tensor(np.concatenate([b1.data, b2.data], axis=1), requires_grad=True)
    backward((joined * Tensor(coeff)).sum())
    b1.zero_grad()
    backward(f(b1))
    assert np.allclose(b1.grad, joined.grad[:, :5])


# -- classify ---------------------------------------------------------------------------

def test_classify_zero_weights_uniform():
    model, _ = build("mewehv", 6, width=1024, seed=5)
    model.eval()
    model.head_hidden.weight.data[...] = 0.0
    model.head_hidden.bias.data[...] = 0.0
    model.head_out.weight.data[...] = 0.0
    model.head_out.bias.data[...] = 0.0
    logp = classify(model, np.random.default_rng(0).normal(size=256))
    assert np.allclose(logp.data, np.log(1.0 / 6.0), atol=1e-12)


def test_classify_is_log_distribution():
    model = tiny_model(n_classes=5)
    model.eval()
    rng = np.random.default_rng(6)
    logp = classify(model, rng.normal(scale=20.0, size=(200, 8)))
    assert np.allclose(np.exp(logp.data).sum(axis=1), 1.0, atol=1e-6)


# -- losses -------------------------------------------------------------------------------

def test_center_loss_zero_at_center():
    bank = CenterBank(Tensor(np.arange(8.0).reshape(2, 4), requires_grad=True))
    r = np.arange(4.0)
    assert center_loss(r, 0, bank).item() == 0.0


def test_center_loss_one_dimensional_case():
    bank = CenterBank(Tensor(np.array([[1.0]]), requires_grad=True))
    assert center_loss(np.array([3.0]), 0, bank).item() == 2.0


def test_center_loss_gradients_match_fd():
    rng = np.random.default_rng(7)
    bank = CenterBank(Tensor(rng.normal(size=(3, 5)), requires_grad=True))
    labels = np.array([0, 2, 1, 1])
    r = Tensor(rng.normal(size=(4, 5)))
    assert finite_difference_check(lambda t: center_loss(t, labels, bank), r) < 1e-6
    # analytic gradient w.r.t. r is (r - center)/batch
    r.requires_grad = True
    r.zero_grad()
    backward(center_loss(r, labels, bank))
    expected = (r.data - bank.centers.data[labels]) / 4
    assert np.allclose(r.grad, expected)
    err = finite_difference_check(
        lambda c: center_loss(Tensor(r.data), labels, CenterBank(c)), bank.centers)
    assert err < 1e-6


def test_center_loss_label_out_of_range():
    bank = CenterBank(Tensor(np.zeros((2, 3)), requires_grad=True))
    with pytest.raises(ModelError):
        center_loss(np.zeros(3), 2, bank)


def test_nll_uniform_six_classes():
    logp = np.full(6, np.log(1.0 / 6.0))
    assert abs(nll_loss(logp, 3).item() - np.log(6.0)) < 1e-12


def test_nll_goes_to_zero_with_confidence():
    eps = 1e-9
    logp = np.log(np.array([1.0 - 5 * eps, eps, eps, eps, eps, eps]))
    assert nll_loss(logp, 0).item() < 1e-8


def test_nll_batch_mean():
    a = np.log(np.array([0.7, 0.2, 0.1]))
    b = np.log(np.array([0.1, 0.8, 0.1]))
    batch = np.stack([a, b])
    individual = (nll_loss(a, 0).item() + nll_loss(b, 1).item()) / 2
    assert abs(nll_loss(batch, np.array([0, 1])).item() - individual) < 1e-12


def test_nll_label_out_of_range():
    with pytest.raises(ModelError):
        nll_loss(np.zeros(3), 5)


# -- total loss ---------------------------------------------------------------------------

def _tiny_batch(rng):
    mf = rng.normal(size=(4, 4, 10))
    em = rng.normal(size=(4, 5, 6))
    labels = np.array([0, 1, 0, 1])
    return mf, em, labels


def test_total_loss_zero_weight_equals_nll():
    rng = np.random.default_rng(8)
    model = tiny_model(seed=8)
    model.eval()
    batch = _tiny_batch(rng)
    loss, logp, _ = total_loss(model, batch, center_weight=0.0, mode="joint")
    assert loss.item() == nll_loss(logp.data, batch[2]).item()


def test_total_loss_at_center_equals_nll():
    rng = np.random.default_rng(9)
    model = tiny_model(seed=9)
    model.eval()
    mf, em, labels = _tiny_batch(rng)
    rich = model.embed(mf, em)
    # move each center onto its sample's embedding
    for i, lab in enumerate(labels[:2]):
        model.centers.centers.data[lab] = rich.data[i]
    loss, logp, _ = total_loss(model, (mf[:2], em[:2], labels[:2]),
                               center_weight=1.0, mode="joint")
    assert abs(loss.item() - nll_loss(logp.data, labels[:2]).item()) < 1e-12


def _branch_params(model):
    return [(name, t) for name, t in model.named_parameters()
            if not name.startswith("head_") and name != "centers"]


def test_split_mode_branch_gradients_come_from_center_loss_alone():
    rng = np.random.default_rng(10)
    model = tiny_model(seed=10)
    model.eval()  # no dropout so graphs are comparable
    batch = _tiny_batch(rng)
    lam = 0.37

    loss, _, _ = total_loss(model, batch, center_weight=lam, mode="split")
    backward(loss)
    split_grads = {n: t.grad.copy() for n, t in _branch_params(model)}
    head_grads = {n: t.grad.copy() for n, t in model.named_parameters()
                  if n.startswith("head_")}
    for _, t in model.named_parameters():
        t.zero_grad()

    rich = model.embed(batch[0], batch[1])
    backward(lam * center_loss(rich, batch[2], model.centers))
    center_only = {n: t.grad.copy() for n, t in _branch_params(model)}

    for name in split_grads:
        assert np.allclose(split_grads[name], center_only[name], atol=1e-12), name
    # the head still learns from the nll term
    assert any(np.abs(g).max() > 0 for g in head_grads.values())


def test_joint_mode_branch_gradients_include_nll():
    rng = np.random.default_rng(11)
    model = tiny_model(seed=11)
    model.eval()
    batch = _tiny_batch(rng)

    loss, _, _ = total_loss(model, batch, center_weight=0.0, mode="joint")
    backward(loss)
    grads = [np.abs(t.grad).max() for _, t in _branch_params(model)]
    assert max(grads) > 0


def test_total_loss_validates_mode_and_weight():
    model = tiny_model()
    batch = _tiny_batch(np.random.default_rng(12))
    with pytest.raises(ModelError):
        total_loss(model, batch, mode="other")
    with pytest.raises(ModelError):
        total_loss(model, batch, center_weight=-1.0)


def test_end_to_end_gradients_tiny_model():
    from conftest import draw_kink_safe_batch
    rng = np.random.default_rng(13)
    model = tiny_model(seed=13)
    model.train()
    batch = draw_kink_safe_batch(model, rng, (4, 4, 10), (4, 5, 6))

    def run(_):
        for bn in model.mfcc_bns:
            bn.running_mean[:] = 0.0
            bn.running_var[:] = 1.0
        loss, _, _ = total_loss(model, batch, center_weight=0.5, mode="joint")
        return loss

    worst = 0.0
    for _, p in model.named_parameters():
        worst = max(worst, finite_difference_check(run, p))
    assert worst < 1e-3
