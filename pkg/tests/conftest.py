import numpy as np
import pytest

from mewehv.corpus import AudioClip
from mewehv.neuralcore import Tensor


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def draw_kink_safe_batch(model, rng, mfcc_shape, emb_shape, margin=5e-3,
                         tries=100):
    """Sample a batch whose ReLU pre-activations all sit at least `margin`
    from zero, so central differences are a valid gradient oracle."""
    n = mfcc_shape[0]
    labels = np.arange(n) % model.n_classes
    for _ in range(tries):
        batch = (rng.normal(size=mfcc_shape), rng.normal(size=emb_shape), labels)
        for bn in model.mfcc_bns:
            bn.running_mean[:] = 0.0
            bn.running_var[:] = 1.0
        closest = np.inf
        x = Tensor(np.asarray(batch[0]))
        for conv, bn in zip(model.mfcc_convs, model.mfcc_bns):
            z = bn.forward(conv.forward(x), True)
            closest = min(closest, np.abs(z.data).min())
            x = z.relu()
        rich = model.embed(batch[0], batch[1])
        hidden = model.head_hidden.forward(rich)
        closest = min(closest, np.abs(hidden.data).min())
        if closest > margin:
            return batch
    raise AssertionError("no kink-safe batch found in %d tries" % tries)


def sine_clip(freq, duration_s, amplitude=1.0, sr=16000, phase=0.0):
    t = np.arange(int(duration_s * sr)) / sr
    return AudioClip.from_float(amplitude * np.sin(2 * np.pi * freq * t + phase))


def silence_clip(duration_s, sr=16000):
    return AudioClip(np.zeros(int(duration_s * sr), dtype=np.int16))
