"""Layers used by the classifier: 1-D conv, batch norm, LSTM, soft
attention pooling, linear, dropout.

Every layer owns its parameters as Tensors, exposes named_parameters()
for checkpointing, and param_count() following the reporting convention
that linear layers count weights only (their biases are tallied
separately in the model's parameter report).

Data layout: conv/batchnorm take [batch, channels, length]; LSTM and
attention take [batch, time, features].
"""

import numpy as np

from .tensor import Tensor, _make, as_tensor, concat, softmax


def _uniform_init(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype),
                  requires_grad=True)


def _zeros(shape, dtype):
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


class Conv1dLayer:
    """Valid (no padding) cross-correlation with stride."""

    def __init__(self, in_channels, out_channels, kernel, stride=1, rng=None, dtype=np.float64):
        if rng is None:
            rng = np.random.default_rng(0)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.weight = _uniform_init(rng, (out_channels, in_channels, kernel),
                                    in_channels * kernel, dtype)
        self.bias = _zeros((out_channels,), dtype)

    def out_length(self, length):
        if length < self.kernel:
            raise ValueError("conv1d input length %d < kernel %d" % (length, self.kernel))
        return (length - self.kernel) // self.stride + 1

    def forward(self, x):
        b, c, length = x.shape
        if c != self.in_channels:
            raise ValueError("conv1d expects %d channels, got %d" % (self.in_channels, c))
        lout = self.out_length(length)
        k, stride = self.kernel, self.stride

        xd = np.ascontiguousarray(x.data)
        sb, sc, sl = xd.strides
        cols = np.lib.stride_tricks.as_strided(
            xd, shape=(b, c, lout, k), strides=(sb, sc, stride * sl, sl))
        cols = cols.transpose(0, 2, 1, 3).reshape(b, lout, c * k)

        w2 = self.weight.data.reshape(self.out_channels, c * k)
        out = (cols @ w2.T + self.bias.data).transpose(0, 2, 1)

        weight, bias = self.weight, self.bias

        def bw(g):
            gt = g.transpose(0, 2, 1)                      # [b, lout, out_ch]
            dw2 = np.einsum("blo,blk->ok", gt, cols)
            db = gt.sum(axis=(0, 1))
            dcols = (gt @ w2).reshape(b, lout, c, k).transpose(0, 2, 1, 3)
            dx = np.zeros((b, c, length), dtype=g.dtype)
            for j in range(k):
                dx[:, :, j:j + stride * lout:stride] += dcols[:, :, :, j]
            return ((x, dx),
                    (weight, dw2.reshape(weight.data.shape)),
                    (bias, db))

        return _make(out, (x, weight, bias), bw)

    def param_count(self):
        return self.out_channels * self.in_channels * self.kernel + self.out_channels

    def named_parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]


class BatchNorm1dLayer:
    """Per-channel normalisation over batch and length axes."""

    def __init__(self, channels, momentum=0.1, eps=1e-5, dtype=np.float64):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = _zeros((channels,), dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def forward(self, x, training):
        b, c, length = x.shape
        if c != self.channels:
            raise ValueError("batchnorm expects %d channels, got %d" % (self.channels, c))
        gamma = self.gamma.reshape(1, c, 1)
        beta = self.beta.reshape(1, c, 1)
        if training:
            n = b * length
            if n < 2:
                raise ValueError("batchnorm train mode needs >= 2 values per channel")
            mean = x.mean(axis=(0, 2), keepdims=True)
            centered = x - mean
            var = (centered * centered).mean(axis=(0, 2), keepdims=True)
            xhat = centered / (var + self.eps).sqrt()
            m = self.momentum
            batch_mean = mean.data.reshape(c)
            batch_var = var.data.reshape(c) * n / (n - 1)   # unbiased for running stats
            self.running_mean = (1 - m) * self.running_mean + m * batch_mean
            self.running_var = (1 - m) * self.running_var + m * batch_var
        else:
            rm = as_tensor(self.running_mean.reshape(1, c, 1))
            rv = as_tensor(self.running_var.reshape(1, c, 1))
            xhat = (x - rm) / (rv + self.eps).sqrt()
        return xhat * gamma + beta

    def param_count(self):
        return 2 * self.channels

    def named_parameters(self):
        return [("gamma", self.gamma), ("beta", self.beta)]


class LstmLayer:
    """Single-layer LSTM, zero initial state, hidden state at every step.

    Gate layout along the 4h axis is input, forget, cell, output.
    """

    def __init__(self, input_size, hidden_size, rng=None, dtype=np.float64):
        if rng is None:
            rng = np.random.default_rng(0)
        self.input_size = input_size
        self.hidden_size = hidden_size
        h = hidden_size
        self.w_ih = _uniform_init(rng, (4 * h, input_size), input_size, dtype)
        self.w_hh = _uniform_init(rng, (4 * h, h), h, dtype)
        self.b_ih = _zeros((4 * h,), dtype)
        self.b_hh = _zeros((4 * h,), dtype)

    def forward(self, x):
        b, t, din = x.shape
        if din != self.input_size:
            raise ValueError("lstm expects input size %d, got %d" % (self.input_size, din))
        h = self.hidden_size
        w_ih_t = self.w_ih.transpose()
        w_hh_t = self.w_hh.transpose()
        bias = self.b_ih + self.b_hh

        hidden = as_tensor(np.zeros((b, h), dtype=x.dtype))
        cell = as_tensor(np.zeros((b, h), dtype=x.dtype))
        outputs = []
        for step in range(t):
            x_t = x[:, step, :]
            gates = x_t.matmul(w_ih_t) + hidden.matmul(w_hh_t) + bias
            i_gate = gates[:, 0:h].sigmoid()
            f_gate = gates[:, h:2 * h].sigmoid()
            g_gate = gates[:, 2 * h:3 * h].tanh()
            o_gate = gates[:, 3 * h:4 * h].sigmoid()
            cell = f_gate * cell + i_gate * g_gate
            hidden = o_gate * cell.tanh()
            outputs.append(hidden.reshape(b, 1, h))
        return concat(outputs, axis=1)

    def param_count(self):
        return 4 * (self.input_size * self.hidden_size
                    + self.hidden_size * self.hidden_size
                    + 2 * self.hidden_size)

    def named_parameters(self):
        return [("w_ih", self.w_ih), ("w_hh", self.w_hh),
                ("b_ih", self.b_ih), ("b_hh", self.b_hh)]


class SoftAttention:
    """Learned softmax pooling over time: e_t = v . tanh(W h_t)."""

    def __init__(self, dim, rng=None, dtype=np.float64):
        if rng is None:
            rng = np.random.default_rng(0)
        self.dim = dim
        self.w = _uniform_init(rng, (dim, dim), dim, dtype)
        self.v = _uniform_init(rng, (dim,), dim, dtype)

    def forward(self, h):
        b, t, d = h.shape
        if d != self.dim:
            raise ValueError("attention expects dim %d, got %d" % (self.dim, d))
        proj = h.reshape(b * t, d).matmul(self.w.transpose()).tanh()
        scores = proj.matmul(self.v.reshape(d, 1)).reshape(b, t)
        weights = softmax(scores, axis=1)
        pooled = (h * weights.reshape(b, t, 1)).sum(axis=1)
        return pooled, weights

    def param_count(self):
        return self.dim * self.dim + self.dim

    def named_parameters(self):
        return [("w", self.w), ("v", self.v)]


class LinearLayer:
    def __init__(self, in_features, out_features, rng=None, dtype=np.float64):
        if rng is None:
            rng = np.random.default_rng(0)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = _uniform_init(rng, (out_features, in_features), in_features, dtype)
        self.bias = _zeros((out_features,), dtype)

    def forward(self, x):
        return x.matmul(self.weight.transpose()) + self.bias

    def param_count(self):
        # reporting convention: weights only; bias tallied separately
        return self.out_features * self.in_features

    def bias_count(self):
        return self.out_features

    def named_parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]


def dropout(x, rate, rng, training):
    """Inverted dropout: scales kept activations by 1/(1-rate) in train mode."""
    if not training or rate <= 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * as_tensor(mask.astype(x.dtype))
