import numpy as np
import pytest

from perfdiff.embed import (
    EmbeddingTable,
    build_vocab,
    init_embeddings,
    kind_row,
    lookup,
    vocab_from_kinds,
)
from perfdiff.errors import VocabError
from perfdiff.minilang import parse


def asts_from(*sources):
    return [parse(src, f"s{i}") for i, src in enumerate(sources)]


class TestBuildVocab:
    def test_lexicographic_ids(self):
        vocab = build_vocab(asts_from("int f(){for(i=0;i<1;i++){x=1;}}", "int g(){if(x<1){x=1;}}"))
        kinds = vocab.kinds()
        assert kinds == sorted(kinds)
        assert vocab.kind_to_id[kinds[0]] == 0
        assert vocab.size == len(kinds)

    def test_repeated_kind_single_id(self):
        # the same construct in many trees (and many times per tree) maps
        # to exactly one id
        vocab = build_vocab(asts_from(*["int f(){x=1;x=2;x=3;}"] * 5))
        assert list(vocab.kind_to_id.values()) == sorted(set(vocab.kind_to_id.values()))
        assert len([k for k in vocab.kind_to_id if k == "assign_op"]) == 1

    def test_disjoint_kind_sets_union(self):
        a = build_vocab(asts_from("int f(){return 0;}"))
        b = build_vocab(asts_from('int g(int p){g("s");}'))
        joint = build_vocab(
            asts_from("int f(){return 0;}", 'int g(int p){g("s");}')
        )
        assert set(joint.kind_to_id) == set(a.kind_to_id) | set(b.kind_to_id)

    def test_round_trip_through_kind_list(self):
        vocab = build_vocab(asts_from("int f(){while(x<1){x+=1;}}"))
        assert vocab_from_kinds(vocab.kinds()) == vocab


class TestInitEmbeddings:
    def test_shape_default(self):
        vocab = vocab_from_kinds(["a", "b"])
        table = init_embeddings(vocab, 120, seed=0)
        assert table.vectors.shape == (2, 120)
        assert table.vectors.dtype == np.float64

    def test_unknown_slot_adds_row(self):
        vocab = vocab_from_kinds(["a", "b"])
        table = init_embeddings(vocab, 8, seed=0, unknown_slot=True)
        assert table.vectors.shape == (3, 8)

    def test_same_seed_identical(self):
        vocab = vocab_from_kinds(["a", "b", "c"])
        t1 = init_embeddings(vocab, 16, seed=9)
        t2 = init_embeddings(vocab, 16, seed=9)
        assert np.array_equal(t1.vectors, t2.vectors)

    def test_bound_is_inverse_sqrt_dim(self):
        vocab = vocab_from_kinds(["a", "b", "c"])
        table = init_embeddings(vocab, 4, seed=7)
        assert np.all(np.abs(table.vectors) < 0.5)
        assert np.all(np.isfinite(table.vectors))

    def test_dim_must_be_positive(self):
        with pytest.raises(ValueError):
            init_embeddings(vocab_from_kinds(["a"]), 0, seed=0)


class TestLookup:
    def setup_method(self):
        self.vocab = vocab_from_kinds(["alpha", "beta"])

    def test_registered_kind(self):
        table = init_embeddings(self.vocab, 6, seed=1)
        row = lookup(table, self.vocab, "beta")
        assert row.shape == (6,)
        assert np.array_equal(row, table.vectors[1])

    def test_unknown_with_slot(self):
        table = init_embeddings(self.vocab, 6, seed=1, unknown_slot=True)
        assert kind_row(table, self.vocab, "gamma") == 2
        assert np.array_equal(lookup(table, self.vocab, "gamma"), table.vectors[2])

    def test_unknown_without_slot(self):
        table = init_embeddings(self.vocab, 6, seed=1)
        with pytest.raises(VocabError, match="gamma"):
            lookup(table, self.vocab, "gamma")

    def test_table_is_dense(self):
        table = init_embeddings(self.vocab, 6, seed=1)
        assert isinstance(table, EmbeddingTable)
        assert np.count_nonzero(table.vectors) == table.vectors.size
