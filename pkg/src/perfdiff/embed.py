"""Node-kind vocabulary and the trainable embedding lookup table.

Each node kind gets one dense id, stable across all trees; the table maps
ids to trainable vectors. An optional reserved slot (row D) absorbs kinds
unseen at vocabulary-build time, which happens whenever a model trained on
one problem is applied to another.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from perfdiff.ast import Ast
from perfdiff.errors import VocabError


@dataclass(frozen=True)
class NodeVocab:
    kind_to_id: dict[str, int] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.kind_to_id)

    def kinds(self) -> list[str]:
        """Kind names in id order."""
        return sorted(self.kind_to_id, key=self.kind_to_id.__getitem__)


def build_vocab(asts: list[Ast]) -> NodeVocab:
    """Assign dense ids to every kind seen, in lexicographic order."""
    kinds: set[str] = set()
    for ast in asts:
        for node in ast.nodes.values():
            kinds.add(node.kind)
    return NodeVocab(kind_to_id={k: i for i, k in enumerate(sorted(kinds))})


def vocab_from_kinds(kinds: list[str]) -> NodeVocab:
    """Rebuild a vocabulary from a serialized id-ordered kind list."""
    return NodeVocab(kind_to_id={k: i for i, k in enumerate(kinds)})


@dataclass
class EmbeddingTable:
    """Dense kind embeddings; rows = vocabulary size (+1 with unknown slot)."""

    vectors: np.ndarray
    unknown_slot: bool = False

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def init_embeddings(
    vocab: NodeVocab, dim: int, seed: int, unknown_slot: bool = False
) -> EmbeddingTable:
    """Draw a (D[+1]) x dim table from uniform(-a, a), a = 1/sqrt(dim)."""
    if dim < 1:
        raise ValueError(f"embedding dim must be >= 1, got {dim}")
    bound = 1.0 / np.sqrt(dim)
    rng = np.random.default_rng(seed)
    rows = vocab.size + (1 if unknown_slot else 0)
    vectors = rng.uniform(-bound, bound, size=(rows, dim)).astype(np.float64)
    return EmbeddingTable(vectors=vectors, unknown_slot=unknown_slot)


def kind_row(table: EmbeddingTable, vocab: NodeVocab, kind: str) -> int:
    row = vocab.kind_to_id.get(kind)
    if row is not None:
        return row
    if table.unknown_slot:
        return vocab.size
    raise VocabError(f"unknown node kind {kind!r} and no reserved slot enabled")


def lookup(table: EmbeddingTable, vocab: NodeVocab, kind: str) -> np.ndarray:
    """Return the embedding row for a kind (a view; do not mutate)."""
    return table.vectors[kind_row(table, vocab, kind)]
