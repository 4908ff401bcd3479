"""Evaluation and analysis toolkit for abstract-to-title generation:
annotation campaigns, best-worst scaling, a ranking-supervised quality
metric over sentence embeddings, humor-classifier ensembling, constrained
dataset splitting, pseudo-data filtering, and correlation statistics."""

__version__ = "0.1.0"
