"""Contextual inflection with a neural CRF tagger and a hard-attention inflector."""

__version__ = "0.1.0"
