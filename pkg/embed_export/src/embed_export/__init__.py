"""Bridge pretrained wave encoders to the MWEV embedding-file contract."""

__version__ = "0.1.0"
