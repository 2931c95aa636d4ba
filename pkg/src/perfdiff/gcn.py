"""Graph-convolution baseline encoder.

Each layer replaces a node's feature with ReLU(W . mean(self + neighbors)
+ b), where neighbors are the parent and children (edges undirected). The
tree vector is the mean over all node features of the last layer. This is
the simplest aggregation consistent with neighborhood message passing and
serves purely as a comparison baseline for the tree-LSTM encoders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from perfdiff.ast import Ast
from perfdiff.embed import EmbeddingTable, NodeVocab, kind_row
from perfdiff.treelstm import Gradients

DEFAULT_DEPTH = 6
DEFAULT_HIDDEN = 117


@dataclass
class GcnTape:
    ast: Ast
    rows: dict[int, int]
    groups: dict[int, list[int]]              # node -> sorted self+neighbors
    means: list[dict[int, np.ndarray]]        # per layer: node -> mean input
    preacts: list[dict[int, np.ndarray]]      # per layer: node -> W m + b


class GcnEncoder:
    def __init__(
        self,
        input_dim: int,
        hidden: int = DEFAULT_HIDDEN,
        depth: int = DEFAULT_DEPTH,
        seed: int = 0,
    ):
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.input_dim = input_dim
        self.hidden = hidden
        self.depth = depth
        rng = np.random.default_rng(seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        d_in = input_dim
        for _ in range(depth):
            bound = 1.0 / np.sqrt(d_in)
            self.weights.append(rng.uniform(-bound, bound, size=(hidden, d_in)))
            self.biases.append(np.zeros(hidden))
            d_in = hidden

    @property
    def d(self) -> int:
        return self.hidden

    def named_parameters(self):
        for k in range(self.depth):
            yield f"gcn{k}.W", self.weights[k]
            yield f"gcn{k}.b", self.biases[k]

    def param_count(self) -> int:
        return sum(a.size for _, a in self.named_parameters())

    def encode(self, ast: Ast, table: EmbeddingTable, vocab: NodeVocab) -> np.ndarray:
        return self.encode_recorded(ast, table, vocab)[0]

    def encode_recorded(
        self, ast: Ast, table: EmbeddingTable, vocab: NodeVocab
    ) -> tuple[np.ndarray, GcnTape]:
        rows = {nid: kind_row(table, vocab, n.kind) for nid, n in ast.nodes.items()}
        order = sorted(ast.nodes)
        groups: dict[int, list[int]] = {nid: [nid] for nid in order}
        for nid, node in ast.nodes.items():
            for child in node.children:
                groups[nid].append(child)
                groups[child].append(nid)
        for nid in order:
            groups[nid].sort()

        feats = {nid: table.vectors[row] for nid, row in rows.items()}
        tape = GcnTape(ast=ast, rows=rows, groups=groups, means=[], preacts=[])
        for k in range(self.depth):
            means = {}
            preacts = {}
            new_feats = {}
            for nid in order:
                group = groups[nid]
                m = feats[group[0]].copy()
                for member in group[1:]:
                    m += feats[member]
                m /= len(group)
                a = self.weights[k] @ m + self.biases[k]
                means[nid] = m
                preacts[nid] = a
                new_feats[nid] = np.maximum(a, 0.0)
            tape.means.append(means)
            tape.preacts.append(preacts)
            feats = new_feats

        readout = feats[order[0]].copy()
        for nid in order[1:]:
            readout += feats[nid]
        readout /= len(order)
        return readout, tape


def gcn_encode(
    encoder: GcnEncoder, ast: Ast, table: EmbeddingTable, vocab: NodeVocab
) -> np.ndarray:
    return encoder.encode(ast, table, vocab)


def gcn_backward(
    encoder: GcnEncoder, tape: GcnTape, upstream_gradient: np.ndarray
) -> Gradients:
    if tape is None:
        raise ValueError("gcn_backward called without a recorded forward pass")
    ast = tape.ast
    order = sorted(ast.nodes)
    n = len(order)
    grads = Gradients()

    up = np.asarray(upstream_gradient, dtype=np.float64)
    dfeat = {nid: up / n for nid in order}

    for k in range(encoder.depth - 1, -1, -1):
        gW = np.zeros_like(encoder.weights[k])
        gb = np.zeros_like(encoder.biases[k])
        dprev = {nid: np.zeros(encoder.weights[k].shape[1]) for nid in order}
        for nid in order:
            da = dfeat[nid] * (tape.preacts[k][nid] > 0.0)
            gW += np.outer(da, tape.means[k][nid])
            gb += da
            dmean = encoder.weights[k].T @ da
            group = tape.groups[nid]
            share = dmean / len(group)
            for member in group:
                dprev[member] += share
        grads.add_param(f"gcn{k}.W", gW)
        grads.add_param(f"gcn{k}.b", gb)
        dfeat = dprev

    for nid, dx in dfeat.items():
        grads.add_row(tape.rows[nid], dx)
    return grads
