"""Hierarchical named entity recognition: subword transformer encoder,
first-subtoken word pooling, word-level interaction layer and a BIO-constrained
linear-chain CRF, trained with an exponential moving average of the weights."""

__version__ = "0.1.0"
