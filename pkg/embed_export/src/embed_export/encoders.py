"""Pretrained wave-encoder loading.

Each supported name maps to a published checkpoint and its hidden width
(1024 for large variants, 768 for base).  `pretrained=False` builds the
same architecture with random weights, which keeps smoke tests and
offline runs independent of checkpoint downloads; geometry and format
are identical either way.
"""

from dataclasses import dataclass

import numpy as np
import torch
from transformers import (HubertConfig, HubertModel, Wav2Vec2Config, Wav2Vec2Model,
                          WavLMConfig, WavLMModel)

LAYER_TAG = "encoder.last_hidden_state"

ENCODERS = {
    "XLSR-Wav2Vec2": ("facebook/wav2vec2-large-xlsr-53", 1024,
                      Wav2Vec2Model, Wav2Vec2Config),
    "HuBERT-base": ("facebook/hubert-base-ls960", 768, HubertModel, HubertConfig),
    "HuBERT-large": ("facebook/hubert-large-ll60k", 1024, HubertModel, HubertConfig),
    "WavLM-base": ("microsoft/wavlm-base", 768, WavLMModel, WavLMConfig),
    "WavLM-large": ("microsoft/wavlm-large", 1024, WavLMModel, WavLMConfig),
}


class EncoderError(RuntimeError):
    pass


@dataclass
class WaveEncoder:
    name: str
    width: int
    model: object
    device: str = "cpu"
    layer: str = LAYER_TAG

    def encode(self, waveform):
        """[n] float waveform in [-1, 1] -> [frames, width] float32."""
        x = np.asarray(waveform, dtype=np.float32)
        x = (x - x.mean()) / np.sqrt(x.var() + 1e-7)
        with torch.no_grad():
            tensor = torch.from_numpy(x).reshape(1, -1).to(self.device)
            out = self.model(tensor).last_hidden_state
        values = out[0].cpu().numpy().astype(np.float32)
        if values.shape[1] != self.width:
            raise EncoderError("%s produced width %d, expected %d"
                               % (self.name, values.shape[1], self.width))
        return values


def load_encoder(name, pretrained=True, device="cpu", layers_override=None):
    if name not in ENCODERS:
        raise EncoderError("unknown encoder %r; supported: %s"
                           % (name, ", ".join(sorted(ENCODERS))))
    checkpoint, width, model_cls, config_cls = ENCODERS[name]
    torch.set_num_threads(1)        # pinned for reproducible exports
    if pretrained:
        try:
            model = model_cls.from_pretrained(checkpoint)
        except Exception as exc:
            raise EncoderError("cannot load checkpoint %s for %s: %s"
                               % (checkpoint, name, exc)) from exc
    else:
        torch.manual_seed(0)
        kwargs = {"hidden_size": width, "num_attention_heads": width // 64}
        if layers_override is not None:
            kwargs["num_hidden_layers"] = layers_override
        model = model_cls(config_cls(**kwargs))
    model.eval().to(device)
    return WaveEncoder(name=name, width=width, model=model, device=device)
