"""Model assembly: the dual-branch classifier and its single-branch
baselines, center loss, negative-log-likelihood loss, and the parameter
report.

The MFCC branch is three (conv1d + batchnorm + ReLU) sets followed by an
LSTM and soft-attention pooling; the wave branch is an LSTM plus
soft-attention pooling over encoder embeddings.  Branch embeddings are
concatenated into a rich embedding that feeds two dense layers with
log-softmax output.  Class centers are ordinary trainable parameters.
"""

from dataclasses import dataclass

import numpy as np

from .neuralcore import Tensor, as_tensor, concat, log_softmax
from .neuralcore.layers import (BatchNorm1dLayer, Conv1dLayer, LinearLayer,
                                LstmLayer, SoftAttention, dropout)

KINDS = ("mewehv", "cnnmfcc", "waveonly")
LOSS_MODES = ("joint", "split")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelProfile:
    """Size profile.  The default reproduces the reference architecture;
    smaller profiles keep the same wiring for desk-scale experiments."""
    channels: int = 128         # MFCC coefficients in, conv channels throughout
    hidden: int = 128           # LSTM hidden size and attention dim
    dropout: float = 0.2
    conv_specs: tuple = ((5, 2), (4, 1), (4, 1))   # (kernel, stride) per set


@dataclass
class CenterBank:
    centers: Tensor

    @property
    def n_classes(self):
        return self.centers.shape[0]

    @property
    def dim(self):
        return self.centers.shape[1]


class MeWEHVModel:
    def __init__(self, kind, n_classes, encoder_width=1024, profile=None,
                 seed=0, dtype=np.float64):
        if kind not in KINDS:
            raise ModelError("kind must be one of %r, got %r" % (KINDS, kind))
        if n_classes < 2:
            raise ModelError("need at least 2 classes")
        profile = profile or ModelProfile()
        self.kind = kind
        self.n_classes = n_classes
        self.encoder_width = encoder_width
        self.profile = profile
        self.seed = seed
        self.dtype = dtype
        self.training = True

        ss = np.random.SeedSequence(seed)
        init_ss, drop_ss = ss.spawn(2)
        rng = np.random.default_rng(init_ss)
        self._dropout_rng = np.random.default_rng(drop_ss)

        c, h = profile.channels, profile.hidden
        self.has_mfcc_branch = kind in ("mewehv", "cnnmfcc")
        self.has_wave_branch = kind in ("mewehv", "waveonly")

        self.mfcc_convs = []
        self.mfcc_bns = []
        if self.has_mfcc_branch:
            for kernel, stride in profile.conv_specs:
                self.mfcc_convs.append(Conv1dLayer(c, c, kernel, stride, rng, dtype))
                self.mfcc_bns.append(BatchNorm1dLayer(c, dtype=dtype))
            self.mfcc_lstm = LstmLayer(c, h, rng, dtype)
            self.mfcc_attn = SoftAttention(h, rng, dtype)
        if self.has_wave_branch:
            self.wave_lstm = LstmLayer(encoder_width, h, rng, dtype)
            self.wave_attn = SoftAttention(h, rng, dtype)

        self.rich_dim = 2 * h if kind == "mewehv" else h
        self.head_hidden = LinearLayer(self.rich_dim, self.rich_dim, rng, dtype)
        self.head_out = LinearLayer(self.rich_dim, n_classes, rng, dtype)
        self.centers = CenterBank(Tensor(
            np.zeros((n_classes, self.rich_dim), dtype=dtype), requires_grad=True))

    # -- modes ----------------------------------------------------------

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self

    # -- forward --------------------------------------------------------

    def mfcc_branch(self, m):
        """[B, channels, T] (or unbatched [channels, T]) -> [B, hidden]."""
        if not self.has_mfcc_branch:
            raise ModelError("%s model has no MFCC branch" % self.kind)
        m, batched = _ensure_batched(m, self.dtype)
        c = self.profile.channels
        if m.shape[1] != c:
            raise ModelError("mfcc branch expects %d coefficients, got %d"
                             % (c, m.shape[1]))
        x = m
        for i, (conv, bn) in enumerate(zip(self.mfcc_convs, self.mfcc_bns)):
            if x.shape[2] < conv.kernel:
                raise ModelError("mfcc conv set %d: input length %d < kernel %d"
                                 % (i, x.shape[2], conv.kernel))
            x = bn.forward(conv.forward(x), self.training).relu()
        x = x.transpose(0, 2, 1)            # [B, T', channels] for the LSTM
        pooled, _ = self.mfcc_attn.forward(self.mfcc_lstm.forward(x))
        return pooled if batched else pooled.reshape(self.profile.hidden)

    def wave_branch(self, e):
        """[B, frames, width] (or unbatched [frames, width]) -> [B, hidden]."""
        if not self.has_wave_branch:
            raise ModelError("%s model has no wave branch" % self.kind)
        e, batched = _ensure_batched(e, self.dtype)
        if e.shape[2] != self.encoder_width:
            raise ModelError("wave branch expects embedding width %d, got %d"
                             % (self.encoder_width, e.shape[2]))
        pooled, _ = self.wave_attn.forward(self.wave_lstm.forward(e))
        return pooled if batched else pooled.reshape(self.profile.hidden)

    def embed(self, mfcc=None, emb=None):
        """Rich embedding per kind; inputs must be batched 3-D arrays."""
        if self.kind == "mewehv":
            if mfcc is None or emb is None:
                raise ModelError("mewehv needs both MFCC and wave inputs")
            return fuse(self.mfcc_branch(mfcc), self.wave_branch(emb))
        if self.kind == "cnnmfcc":
            if mfcc is None:
                raise ModelError("cnnmfcc needs an MFCC input")
            return self.mfcc_branch(mfcc)
        if emb is None:
            raise ModelError("waveonly needs a wave input")
        return self.wave_branch(emb)

    def classify(self, rich):
        """Dense head: linear -> ReLU -> dropout -> linear -> log-softmax."""
        rich, batched = _ensure_batched_2d(rich, self.dtype)
        x = self.head_hidden.forward(rich).relu()
        x = dropout(x, self.profile.dropout, self._dropout_rng, self.training)
        logp = log_softmax(self.head_out.forward(x), axis=-1)
        return logp if batched else logp.reshape(self.n_classes)

    def forward(self, mfcc=None, emb=None):
        rich = self.embed(mfcc, emb)
        return self.classify(rich), rich

    # -- parameters -----------------------------------------------------

    def _blocks(self):
        blocks = []
        if self.has_mfcc_branch:
            for i, (conv, bn) in enumerate(zip(self.mfcc_convs, self.mfcc_bns)):
                blocks.append(("mfcc_conv%d" % i, conv))
                blocks.append(("mfcc_bn%d" % i, bn))
            blocks.append(("mfcc_lstm", self.mfcc_lstm))
            blocks.append(("mfcc_attn", self.mfcc_attn))
        if self.has_wave_branch:
            blocks.append(("wave_lstm", self.wave_lstm))
            blocks.append(("wave_attn", self.wave_attn))
        blocks.append(("head_hidden", self.head_hidden))
        blocks.append(("head_out", self.head_out))
        return blocks

    def named_parameters(self):
        out = []
        for prefix, block in self._blocks():
            for name, tensor in block.named_parameters():
                out.append((prefix + "." + name, tensor))
        out.append(("centers", self.centers.centers))
        return out

    def named_buffers(self):
        out = []
        for i, bn in enumerate(self.mfcc_bns):
            out.append(("mfcc_bn%d.running_mean" % i, bn.running_mean))
            out.append(("mfcc_bn%d.running_var" % i, bn.running_var))
        return out

    def trainable_parameters(self):
        return [t for _, t in self.named_parameters()]

    def parameter_report(self):
        """Per-layer counts in table convention (linear layers weight-only)
        plus the bias/center accounting that yields the trainable total."""
        rows = [{"layer": prefix, "params": block.param_count()}
                for prefix, block in self._blocks()]
        bias_params = self.head_hidden.bias_count() + self.head_out.bias_count()
        center_params = self.centers.centers.size
        total = sum(r["params"] for r in rows) + bias_params + center_params
        actual = sum(t.size for t in self.trainable_parameters())
        assert total == actual, (total, actual)
        return {
            "rows": rows,
            "linear_bias_params": bias_params,
            "center_params": center_params,
            "trainable_total": total,
        }

    # -- state ----------------------------------------------------------

    def state_arrays(self):
        entries = [(name, t.data) for name, t in self.named_parameters()]
        entries += [(name, buf) for name, buf in self.named_buffers()]
        return entries

    def load_state_arrays(self, blocks):
        blocks = dict(blocks)
        for name, tensor in self.named_parameters():
            if name not in blocks:
                raise ModelError("checkpoint missing parameter %r" % name)
            arr = blocks.pop(name)
            if arr.size != tensor.data.size:
                raise ModelError("parameter %r: expected %d values, got %d"
                                 % (name, tensor.data.size, arr.size))
            tensor.data[...] = np.asarray(arr).reshape(tensor.data.shape).astype(self.dtype)
        for i, bn in enumerate(self.mfcc_bns):
            for attr in ("running_mean", "running_var"):
                name = "mfcc_bn%d.%s" % (i, attr)
                if name in blocks:
                    arr = blocks.pop(name)
                    getattr(bn, attr)[...] = np.asarray(arr).reshape(-1).astype(self.dtype)
        if blocks:
            raise ModelError("checkpoint has unexpected entries: %s"
                             % ", ".join(sorted(blocks)))


def _ensure_batched(x, dtype):
    t = x if isinstance(x, Tensor) else as_tensor(np.asarray(x, dtype=dtype))
    if t.ndim == 2:
        return t.reshape(1, *t.shape), False
    if t.ndim == 3:
        return t, True
    raise ModelError("expected 2-D or 3-D input, got shape %r" % (t.shape,))


def _ensure_batched_2d(x, dtype):
    t = x if isinstance(x, Tensor) else as_tensor(np.asarray(x, dtype=dtype))
    if t.ndim == 1:
        return t.reshape(1, -1), False
    if t.ndim == 2:
        return t, True
    raise ModelError("expected 1-D or 2-D embedding, got shape %r" % (t.shape,))


# -- spec operations ------------------------------------------------------

def build(kind, n_classes, width=1024, profile=None, seed=0, dtype=np.float64):
    """Construct a model of the given kind and its parameter report."""
    model = MeWEHVModel(kind, n_classes, encoder_width=width, profile=profile,
                        seed=seed, dtype=dtype)
    return model, model.parameter_report()


def forward_mfcc_branch(model, m):
    return model.mfcc_branch(m)


def forward_wave_branch(model, e):
    return model.wave_branch(e)


def fuse(b1, b2):
    """Concatenate branch embeddings along the feature axis."""
    b1 = b1 if isinstance(b1, Tensor) else as_tensor(b1)
    b2 = b2 if isinstance(b2, Tensor) else as_tensor(b2)
    return concat([b1, b2], axis=b1.ndim - 1)


def classify(model, rich):
    return model.classify(rich)


def _one_hot(labels, n_classes, dtype):
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ModelError("label out of range [0, %d): %r" % (n_classes, labels))
    hot = np.zeros((len(labels), n_classes), dtype=dtype)
    hot[np.arange(len(labels)), labels] = 1.0
    return hot


def center_loss(rich, labels, bank):
    """Mean over the batch of 0.5 * ||rich - center(label)||^2."""
    centers = bank.centers if isinstance(bank, CenterBank) else bank
    rich, _ = _ensure_batched_2d(rich, centers.dtype)
    hot = _one_hot(labels, centers.shape[0], centers.dtype)
    selected = as_tensor(hot).matmul(centers)
    diff = rich - selected
    batch = rich.shape[0]
    return (diff * diff).sum() * (0.5 / batch)


def nll_loss(logprobs, labels):
    """Mean negative log-likelihood of the true labels."""
    logprobs, _ = _ensure_batched_2d(logprobs, np.float64)
    hot = _one_hot(labels, logprobs.shape[1], logprobs.dtype)
    batch = logprobs.shape[0]
    return -(logprobs * as_tensor(hot)).sum() / batch


def total_loss(model, batch, center_weight=0.01, mode="joint"):
    """Combined loss over a (mfcc, embeddings, labels) batch.

    joint: nll + weight * center, gradients flow end to end.
    split: nll gradients stop at the rich embedding (training only the
    dense head), center gradients train the branches and the centers.
    """
    if mode not in LOSS_MODES:
        raise ModelError("mode must be one of %r, got %r" % (LOSS_MODES, mode))
    if center_weight < 0:
        raise ModelError("center weight must be non-negative")
    mfcc, emb, labels = batch
    rich = model.embed(mfcc, emb)
    logp = model.classify(rich.detach() if mode == "split" else rich)
    loss = nll_loss(logp, labels)
    if center_weight > 0:
        loss = loss + center_weight * center_loss(rich, labels, model.centers)
    return loss, logp, rich
