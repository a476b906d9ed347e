"""Class-specific per-node heatmaps from a forward trace.

Five families: gradient saliency, CAM, Grad-CAM (any layer, plus the
layer-averaged variant), and excitation backprop with its contrastive
extension. All methods read the pre-softmax class score, and all values are
nonnegative by construction. Heatmaps for the two classes of one molecule
are normalized jointly so they form a single probability distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from gcnx.graphs import AttributedGraph
from gcnx.model import ForwardTrace, ModelParams, forward, score_gradients

METHODS = ("gradient", "cam", "grad_cam", "grad_cam_avg", "eb", "ceb")


@dataclass(frozen=True)
class Heatmap:
    method: str
    class_id: int
    values: np.ndarray
    normalized: bool = False
    layer: int | None = None

    def to_record(self, molecule_id: str, smiles: str, digits: int = 10) -> dict:
        """JSON-lines record; values rounded so equivalent methods emit
        byte-identical payloads."""
        return {
            "molecule_id": molecule_id,
            "smiles": smiles,
            "method": self.method,
            "class": self.class_id,
            "layer": self.layer,
            "values": [round(float(v), digits) for v in self.values],
            "normalized": self.normalized,
        }


def gradient_saliency(
    trace: ForwardTrace, graph: AttributedGraph, params: ModelParams, class_id: int
) -> Heatmap:
    """Euclidean norm of the positive part of d(score)/d(node features)."""
    grads = score_gradients(trace, graph, params, class_id)
    clamped = np.maximum(grads.input, 0.0)
    values = np.sqrt((clamped * clamped).sum(axis=1))
    return Heatmap(method="gradient", class_id=class_id, values=values)


def cam(trace: ForwardTrace, params: ModelParams, class_id: int) -> Heatmap:
    """Final-layer feature maps weighted by the classifier column."""
    values = np.maximum(
        trace.activations[-1] @ params.classifier_weights[:, class_id], 0.0
    )
    return Heatmap(method="cam", class_id=class_id, values=values)


def grad_cam(
    trace: ForwardTrace,
    graph: AttributedGraph,
    params: ModelParams,
    class_id: int,
    layer: int | None = None,
) -> Heatmap:
    """Layer features weighted by node-averaged score gradients."""
    n_layers = trace.n_layers
    if layer is None:
        layer = n_layers
    if not 1 <= layer <= n_layers:
        raise ValueError(f"layer must be in 1..{n_layers}, got {layer}")
    grads = score_gradients(trace, graph, params, class_id)
    alpha = grads.activations[layer].mean(axis=0)
    values = np.maximum(trace.activations[layer] @ alpha, 0.0)
    return Heatmap(method="grad_cam", class_id=class_id, values=values, layer=layer)


def grad_cam_avg(
    trace: ForwardTrace, graph: AttributedGraph, params: ModelParams, class_id: int
) -> Heatmap:
    """Arithmetic mean of Grad-CAM heatmaps over all convolution layers."""
    grads = score_gradients(trace, graph, params, class_id)
    total = np.zeros(trace.n_nodes)
    for layer in range(1, trace.n_layers + 1):
        alpha = grads.activations[layer].mean(axis=0)
        total += np.maximum(trace.activations[layer] @ alpha, 0.0)
    return Heatmap(
        method="grad_cam_avg", class_id=class_id, values=total / trace.n_layers
    )


# ------------------------------------------------------- excitation backprop


def _safe_ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    """Elementwise numerator/denominator with the 0/0 -> 0 convention."""
    out = np.zeros_like(numerator, dtype=np.float64)
    np.divide(numerator, denominator, out=out, where=denominator != 0.0)
    return out


@dataclass
class ExcitationTrace:
    """Per-layer backpropagated probability mass, for conservation checks.

    p_activations[l] is the mass over F^l entries (l = 0..L);
    p_propagated[l] the mass over the locally averaged features V @ F^l.
    """

    p_gap: np.ndarray
    p_activations: list[np.ndarray]
    p_propagated: list[np.ndarray]

    @property
    def heatmap_values(self) -> np.ndarray:
        p_input = self.p_activations[0]
        return p_input.sum(axis=1) / p_input.shape[1]

    def layer_masses(self) -> list[float]:
        masses = [float(self.p_gap.sum())]
        masses.append(float(self.p_activations[-1].sum()))
        for l in range(len(self.p_propagated) - 1, -1, -1):
            masses.append(float(self.p_propagated[l].sum()))
            masses.append(float(self.p_activations[l].sum()))
        return masses


def excitation_backprop_trace(
    trace: ForwardTrace,
    graph: AttributedGraph,
    params: ModelParams,
    class_id: int,
    negate_classifier: bool = False,
) -> ExcitationTrace:
    """Full excitation backprop with every intermediate mass retained."""
    n = trace.n_nodes
    v = graph.norm_propagation

    classifier_column = params.classifier_weights[:, class_id]
    if negate_classifier:
        classifier_column = -classifier_column
    excitation = trace.gap * np.maximum(classifier_column, 0.0)
    p_gap = _safe_ratio(excitation, np.full_like(excitation, excitation.sum()))

    p_act = trace.activations[-1] * _safe_ratio(p_gap, n * trace.gap)[None, :]
    p_activations = [p_act]
    p_propagated = []

    for l in range(trace.n_layers - 1, -1, -1):
        w_pos = np.maximum(params.layer_weights[l], 0.0)
        prop = trace.propagated[l]
        # perceptron rule: split each output unit's mass over same-node inputs
        z = prop @ w_pos
        p_prop = prop * (_safe_ratio(p_activations[-1], z) @ w_pos.T)
        p_propagated.append(p_prop)
        # averaging rule: split each averaged unit's mass over contributing nodes
        previous = trace.activations[l]
        p_activations.append(previous * (v.T @ _safe_ratio(p_prop, prop)))

    p_activations.reverse()
    p_propagated.reverse()

    return ExcitationTrace(
        p_gap=p_gap, p_activations=p_activations, p_propagated=p_propagated
    )


def excitation_bp(
    trace: ForwardTrace,
    graph: AttributedGraph,
    params: ModelParams,
    class_id: int,
    contrastive: bool = False,
) -> Heatmap:
    """Excitation backprop heatmap; the contrastive variant runs a second
    pass with the classifier column negated and keeps the positive part of
    the difference, rescaled to unit mass."""
    base = excitation_backprop_trace(trace, graph, params, class_id)
    if not contrastive:
        return Heatmap(method="eb", class_id=class_id, values=base.heatmap_values)
    opposite = excitation_backprop_trace(
        trace, graph, params, class_id, negate_classifier=True
    )
    diff = np.maximum(base.heatmap_values - opposite.heatmap_values, 0.0)
    total = diff.sum()
    if total > 0.0:
        diff = diff / total
    return Heatmap(method="ceb", class_id=class_id, values=diff)


# ------------------------------------------------------------ normalization


def normalize_pair(h_pos: Heatmap, h_neg: Heatmap) -> tuple[Heatmap, Heatmap]:
    """Scale both class heatmaps by their joint sum so the pair forms one
    probability distribution. An all-zero pair is returned unscaled and
    flagged unnormalized."""
    joint = float(h_pos.values.sum() + h_neg.values.sum())
    if joint == 0.0:
        return (
            replace(h_pos, normalized=False),
            replace(h_neg, normalized=False),
        )
    return (
        replace(h_pos, values=h_pos.values / joint, normalized=True),
        replace(h_neg, values=h_neg.values / joint, normalized=True),
    )


def compute_heatmap(
    trace: ForwardTrace,
    graph: AttributedGraph,
    params: ModelParams,
    method: str,
    class_id: int,
    layer: int | None = None,
) -> Heatmap:
    if method == "gradient":
        return gradient_saliency(trace, graph, params, class_id)
    if method == "cam":
        return cam(trace, params, class_id)
    if method == "grad_cam":
        return grad_cam(trace, graph, params, class_id, layer)
    if method == "grad_cam_avg":
        return grad_cam_avg(trace, graph, params, class_id)
    if method == "eb":
        return excitation_bp(trace, graph, params, class_id)
    if method == "ceb":
        return excitation_bp(trace, graph, params, class_id, contrastive=True)
    if method == "null":  # diagnostic explainer that marks nothing
        return Heatmap(method="null", class_id=class_id, values=np.zeros(trace.n_nodes))
    raise ValueError(f"unknown explanation method {method!r}")


def explain_pair(
    graph: AttributedGraph,
    params: ModelParams,
    method: str,
    layer: int | None = None,
    trace: ForwardTrace | None = None,
) -> tuple[Heatmap, Heatmap]:
    """Normalized (positive-class, negative-class) heatmap pair.

    Class 1 is treated as the positive class throughout the pipeline."""
    if trace is None:
        trace = forward(graph, params)
    h_pos = compute_heatmap(trace, graph, params, method, 1, layer)
    h_neg = compute_heatmap(trace, graph, params, method, 0, layer)
    return normalize_pair(h_pos, h_neg)
