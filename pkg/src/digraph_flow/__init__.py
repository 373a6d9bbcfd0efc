"""Directed-graph generation with discrete flow matching and discrete diffusion."""

from .graph import DiGraph, GraphBatch, collate, is_acyclic, permute, topological_order

__version__ = "0.1.0"

__all__ = ["DiGraph", "GraphBatch", "collate", "is_acyclic", "permute", "topological_order", "__version__"]
