"""gcnx: train graph convolutional networks on molecules, explain their
predictions with per-atom heatmaps, score the explanations, and mine
recurring salient substructures as functional-group candidates."""

__version__ = "0.1.0"

from gcnx.graphs import AttributedGraph, ElementLabel, connected_components, normalize_adjacency

__all__ = [
    "AttributedGraph",
    "ElementLabel",
    "connected_components",
    "normalize_adjacency",
    "__version__",
]
