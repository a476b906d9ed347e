"""Salient-substructure mining: turn explanation heatmaps into ranked
candidate functional groups.

Activated vertices (normalized saliency above a threshold) induce subgraphs
whose connected components are canonicalized into exact substructure keys.
Each candidate is then counted per molecule: how often it occurs inside an
explained region, and how often it occurs anywhere in the positive and
negative data. Node labels (element, charge, aromaticity) and bond orders
both participate in substructure equality.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass

import numpy as np

from gcnx.graphs import ElementLabel, connected_components
from gcnx.smiles import Molecule, write_smiles

log = logging.getLogger(__name__)

MAX_SUBGRAPH_NODES = 64


class FragmentTooLargeError(ValueError):
    pass


LabelKey = tuple  # (symbol, formal_charge, aromatic)


@dataclass(frozen=True)
class Fragment:
    """Connected labeled subgraph with local vertex numbering."""

    node_labels: tuple[LabelKey, ...]
    edges: tuple[tuple[int, int, int], ...]  # (i, j, order), i < j

    @property
    def n_nodes(self) -> int:
        return len(self.node_labels)

    def adjacency_lists(self) -> list[list[tuple[int, int]]]:
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n_nodes)]
        for i, j, order in self.edges:
            adj[i].append((j, order))
            adj[j].append((i, order))
        return adj


def molecule_fragment(molecule: Molecule, vertices) -> Fragment:
    """Fragment induced by a vertex subset of a molecule (edges kept whenever
    both endpoints are selected)."""
    vertices = sorted(vertices)
    index = {v: i for i, v in enumerate(vertices)}
    labels = tuple(molecule.elements[v].key() for v in vertices)
    edges = tuple(
        (index[i], index[j], order)
        for i, j, order in molecule.bonds
        if i in index and j in index
    )
    return Fragment(node_labels=labels, edges=edges)


def whole_molecule_fragment(molecule: Molecule) -> Fragment:
    return molecule_fragment(molecule, range(molecule.n_atoms))


# ------------------------------------------------------------ canonical form


def _refine(labels, adj, colors):
    """Iterate color refinement until the partition stabilizes. The signature
    of a node is its color, its label, and the multiset of (order, neighbor
    color) pairs."""
    while True:
        signatures = [
            (
                colors[i],
                labels[i],
                tuple(sorted((order, colors[j]) for j, order in adj[i])),
            )
            for i in range(len(labels))
        ]
        ranking = {sig: rank for rank, sig in enumerate(sorted(set(signatures)))}
        new_colors = [ranking[sig] for sig in signatures]
        if new_colors == colors:
            return colors
        colors = new_colors


def _certificate(fragment: Fragment, order) -> tuple:
    position = {node: pos for pos, node in enumerate(order)}
    labels = tuple(fragment.node_labels[node] for node in order)
    edges = tuple(
        sorted(
            (min(position[i], position[j]), max(position[i], position[j]), bond)
            for i, j, bond in fragment.edges
        )
    )
    return (labels, edges)


def _search(fragment: Fragment, adj, colors, best: list):
    n = fragment.n_nodes
    counts = Counter(colors)
    if all(count == 1 for count in counts.values()):
        order = sorted(range(n), key=lambda i: colors[i])
        cert = _certificate(fragment, order)
        if best[0] is None or cert < best[0]:
            best[0] = cert
        return
    target = min(color for color, count in counts.items() if count > 1)
    members = [i for i in range(n) if colors[i] == target]
    for pivot in members:
        branched = [c * 2 for c in colors]
        branched[pivot] -= 1  # individualize
        refined = _refine(fragment.node_labels, adj, branched)
        _search(fragment, adj, refined, best)


def canonical_form(fragment: Fragment) -> tuple:
    """Lexicographically smallest (labels, edges) serialization over all
    label-refinement-compatible orderings; equal exactly for isomorphic
    fragments."""
    if fragment.n_nodes > MAX_SUBGRAPH_NODES:
        raise FragmentTooLargeError(
            f"fragment has {fragment.n_nodes} nodes (cap {MAX_SUBGRAPH_NODES})"
        )
    adj = fragment.adjacency_lists()
    colors = _refine(fragment.node_labels, adj, [0] * fragment.n_nodes)
    best: list = [None]
    _search(fragment, adj, colors, best)
    return best[0]


def canonical_key(fragment: Fragment) -> bytes:
    labels, edges = canonical_form(fragment)
    label_part = ";".join(f"{sym},{charge:+d},{int(arom)}" for sym, charge, arom in labels)
    edge_part = ";".join(f"{i}-{j}:{order}" for i, j, order in edges)
    return f"{len(labels)}|{label_part}|{edge_part}".encode("ascii")


@dataclass(frozen=True)
class CanonicalSubgraph:
    """A substructure identity: canonical key plus its canonical structure."""

    key: bytes
    node_labels: tuple[LabelKey, ...]
    edges: tuple[tuple[int, int, int], ...]
    rendering: str

    @property
    def node_count(self) -> int:
        return len(self.node_labels)

    @property
    def element_multiset(self) -> tuple[str, ...]:
        return tuple(sorted(sym for sym, _, _ in self.node_labels))

    def fragment(self) -> Fragment:
        return Fragment(node_labels=self.node_labels, edges=self.edges)


def canonicalize(fragment: Fragment) -> CanonicalSubgraph:
    labels, edges = canonical_form(fragment)
    canonical = Fragment(node_labels=labels, edges=edges)
    elements = [
        ElementLabel(symbol=sym, formal_charge=charge, aromatic=bool(arom))
        for sym, charge, arom in labels
    ]
    return CanonicalSubgraph(
        key=canonical_key(canonical),
        node_labels=labels,
        edges=edges,
        rendering=write_smiles(elements, edges),
    )


# --------------------------------------------------------- activated regions


def activated_vertices(values, tau: float = 0.0) -> list[bool]:
    return [bool(v > tau) for v in np.asarray(values, dtype=float)]


def activated_subgraphs(
    molecule: Molecule, values, tau: float = 0.0
) -> list[CanonicalSubgraph]:
    """Canonical subgraphs of all activated connected components with at
    least two nodes. Oversized components are skipped with a warning."""
    mask = activated_vertices(values, tau)
    out = []
    for component in connected_components(molecule.graph, mask):
        if len(component) < 2:
            continue
        if len(component) > MAX_SUBGRAPH_NODES:
            log.warning(
                "skipping activated component with %d nodes (cap %d)",
                len(component),
                MAX_SUBGRAPH_NODES,
            )
            continue
        out.append(canonicalize(molecule_fragment(molecule, component)))
    return out


# ---------------------------------------------------------------- containment


def _label_multiset_fits(pattern: Fragment, host: Fragment) -> bool:
    host_labels = Counter(host.node_labels)
    for label, count in Counter(pattern.node_labels).items():
        if host_labels[label] < count:
            return False
    host_orders = Counter(order for _, _, order in host.edges)
    for order, count in Counter(o for _, _, o in pattern.edges).items():
        if host_orders[order] < count:
            return False
    return True


def contains_fragment(host: Fragment, pattern: Fragment) -> bool:
    """Exact labeled subgraph containment: is there an injective map of the
    pattern into the host preserving node labels and bond orders on every
    pattern edge? Backtracking with label and degree pruning."""
    if pattern.n_nodes > host.n_nodes or not _label_multiset_fits(pattern, host):
        return False
    pattern_adj = pattern.adjacency_lists()
    host_adj = host.adjacency_lists()
    host_bond = {}
    for i, j, order in host.edges:
        host_bond[(i, j)] = order
        host_bond[(j, i)] = order
    host_by_label: dict[LabelKey, list[int]] = {}
    for idx, label in enumerate(host.node_labels):
        host_by_label.setdefault(label, []).append(idx)

    # visit pattern nodes so each one (after the first) touches a mapped node;
    # start from the most selective label
    host_label_counts = Counter(host.node_labels)
    start = min(
        range(pattern.n_nodes),
        key=lambda i: (host_label_counts[pattern.node_labels[i]], -len(pattern_adj[i])),
    )
    order_of_visit = [start]
    visited = {start}
    frontier = list(pattern_adj[start])
    while len(order_of_visit) < pattern.n_nodes:
        nxt = None
        for node, _ in frontier:
            if node not in visited:
                nxt = node
                break
        if nxt is None:  # pattern must be connected
            raise ValueError("containment patterns must be connected")
        visited.add(nxt)
        order_of_visit.append(nxt)
        frontier.extend(pattern_adj[nxt])

    mapping: dict[int, int] = {}
    used = set()

    def backtrack(depth: int) -> bool:
        if depth == len(order_of_visit):
            return True
        node = order_of_visit[depth]
        required = [
            (neighbor, order)
            for neighbor, order in pattern_adj[node]
            if neighbor in mapping
        ]
        for candidate in host_by_label.get(pattern.node_labels[node], ()):
            if candidate in used:
                continue
            if len(host_adj[candidate]) < len(pattern_adj[node]):
                continue
            if any(
                host_bond.get((candidate, mapping[neighbor])) != order
                for neighbor, order in required
            ):
                continue
            mapping[node] = candidate
            used.add(candidate)
            if backtrack(depth + 1):
                return True
            del mapping[node]
            used.remove(candidate)
        return False

    return backtrack(0)


def molecule_contains(molecule: Molecule, pattern: CanonicalSubgraph | Fragment) -> bool:
    if isinstance(pattern, CanonicalSubgraph):
        pattern = pattern.fragment()
    return contains_fragment(whole_molecule_fragment(molecule), pattern)


def count_dataset_occurrences(pattern, dataset_entries) -> tuple[int, int]:
    """(N_p, N_n): molecules containing the pattern, counted at most once per
    molecule, split by label. Entries are (id, Molecule, label) triples."""
    n_pos = n_neg = 0
    for _, molecule, label in dataset_entries:
        if molecule_contains(molecule, pattern):
            if label == 1:
                n_pos += 1
            else:
                n_neg += 1
    return n_pos, n_neg


# -------------------------------------------------------------------- mining


@dataclass(frozen=True)
class SubstructureRecord:
    subgraph: CanonicalSubgraph
    n_explained: int
    n_pos: int
    n_neg: int

    @property
    def r_e(self) -> float:
        return self.n_explained / (self.n_pos + self.n_neg)

    @property
    def r_p(self) -> float:
        return self.n_pos / (self.n_pos + self.n_neg)

    def to_dict(self) -> dict:
        return {
            "substructure": self.subgraph.rendering,
            "canonical_key": self.subgraph.key.decode("ascii"),
            "node_count": self.subgraph.node_count,
            "n_explained": self.n_explained,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
            "r_e": self.r_e,
            "r_p": self.r_p,
        }


def mine(
    dataset_entries,
    heatmaps: dict[str, np.ndarray],
    predictions: dict[str, int] | None = None,
    tau: float = 0.0,
    min_occurrence: int = 10,
    top_k: int = 10,
    true_positives_only: bool = True,
) -> list[SubstructureRecord]:
    """Rank substructures extracted from explanation heatmaps.

    Candidates are the activated components of qualifying molecules. For a
    candidate s: n_explained counts qualifying molecules whose activated
    region contains s; n_pos/n_neg count molecules anywhere in the dataset
    containing s. Only candidates with n_pos + n_neg > min_occurrence
    survive; ranking is by descending R_e, then R_p, node count, and key.
    """
    if true_positives_only and predictions is None:
        raise ValueError("true_positives_only requires predictions")

    qualifying: list[tuple[str, Molecule]] = []
    for mol_id, molecule, label in dataset_entries:
        if mol_id not in heatmaps:
            continue
        if true_positives_only and not (label == 1 and predictions.get(mol_id) == 1):
            continue
        qualifying.append((mol_id, molecule))

    candidates: dict[bytes, CanonicalSubgraph] = {}
    activated_regions: list[Fragment] = []
    for mol_id, molecule in qualifying:
        values = heatmaps[mol_id]
        mask = activated_vertices(values, tau)
        activated_regions.append(
            molecule_fragment(molecule, [i for i, on in enumerate(mask) if on])
        )
        for sub in activated_subgraphs(molecule, values, tau):
            candidates.setdefault(sub.key, sub)

    records = []
    for key in sorted(candidates):
        sub = candidates[key]
        n_pos, n_neg = count_dataset_occurrences(sub, dataset_entries)
        if n_pos + n_neg <= min_occurrence:
            continue
        pattern = sub.fragment()
        n_explained = sum(
            1 for region in activated_regions if contains_fragment(region, pattern)
        )
        records.append(
            SubstructureRecord(
                subgraph=sub, n_explained=n_explained, n_pos=n_pos, n_neg=n_neg
            )
        )

    records.sort(
        key=lambda r: (-r.r_e, -r.r_p, -r.subgraph.node_count, r.subgraph.key)
    )
    return records[:top_k]
