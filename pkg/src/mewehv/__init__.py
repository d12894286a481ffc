"""Dual-branch speech classification: MFCC-CNN embeddings fused with
wave-encoder embeddings, with corpus construction tooling and an
experiment harness."""

__version__ = "0.1.0"
