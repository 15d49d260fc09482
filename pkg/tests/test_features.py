import json

import numpy as np
import pytest

from conftest import GOLDEN
from corefrank.corpus_io import EmbeddingTable, parse_conll, read_conll, read_embeddings
from corefrank.features import (N_BUCKETS, FeatureSpec, Vocabulary, bucket, extract_anaphoric_input,
                                extract_pair_input)
from corefrank.model import ModelConfig, init_params, score_document

D = 3
SPEC = FeatureSpec(D)
BLOCK = SPEC.block_dim
PAIR_FEATS = 2 * BLOCK


def _table(fixtures_dir):
    return read_embeddings(fixtures_dir / "tiny_embeddings.txt", D)


def test_bucket_boundaries():
    expect = {0: 0, 1: 1, 4: 4, 5: 5, 7: 5, 8: 6, 15: 6, 16: 7, 31: 7, 32: 8, 63: 8, 64: 9, 1000: 9}
    assert {d: bucket(d) for d in expect} == expect
    with pytest.raises(ValueError):
        bucket(-1)


def test_dimensions():
    assert SPEC.block_dim == 10 * D
    assert SPEC.pair_dim == 20 * D + 23
    assert SPEC.anaphoric_dim == 10 * D + 20


def test_vocabulary_lookup():
    v = Vocabulary(["John", "the"])
    assert v("John") == 1 and v("The") == 2 and v("zzz") == 0 and v(None) == 0


TWINS = """#begin document (nw/t/00/twins); part 000
nw/t/00/twins	0	0	the	DT	*	-	-	-	-	*	(0
nw/t/00/twins	0	1	man	NN	*	-	-	-	-	*	0)
nw/t/00/twins	0	2	saw	VBD	*	-	-	-	-	*	-
nw/t/00/twins	0	3	the	DT	*	-	-	-	-	*	(1
nw/t/00/twins	0	4	man	NN	*	-	-	-	-	*	1)

#end document
"""


def test_identical_twins_same_sentence(fixtures_dir):
    doc = parse_conll(TWINS, warn_singletons=False)[0]
    x = extract_pair_input(doc, doc.mentions[0], doc.mentions[1], _table(fixtures_dir))
    feats = x[PAIR_FEATS:]
    assert feats[N_BUCKETS + 0] == 1  # sentence distance bucket 0
    assert feats[1] == 1  # mention distance 1
    assert feats[2 * N_BUCKETS + 1] == 1  # string match
    assert feats[2 * N_BUCKETS + 2] == 1  # head match
    assert feats.sum() == 5  # two one-hots plus three flags (same speaker too)


def test_all_oov_slots_are_unknown(fixtures_dir):
    doc = parse_conll(TWINS, warn_singletons=False)[0]
    unk = np.array([0.3, -0.2, 0.1])
    table = EmbeddingTable(D, {"zebra": np.array([1.0, 1.0, 1.0])}, unk)
    x = extract_anaphoric_input(doc, doc.mentions[1], table)
    np.testing.assert_allclose(x[:BLOCK].reshape(10, D), np.tile(unk, (10, 1)), atol=1e-15)


def test_anaphoric_buckets(fixtures_dir):
    doc = read_conll(fixtures_dir / "minimal.conll")[0]
    table = _table(fixtures_dir)
    first = extract_anaphoric_input(doc, doc.mentions[0], table)[BLOCK:]
    assert first[N_BUCKETS + 0] == 1  # position bucket 0
    assert first[1] == 1  # "John Smith": length 2 -> bucket 1
    he = extract_anaphoric_input(doc, doc.mentions[1], table)[BLOCK:]
    assert he[0] == 1  # one-token mention
    assert he[N_BUCKETS + 1] == 1


def test_context_slots_outside_sentence_are_unknown(fixtures_dir):
    doc = read_conll(fixtures_dir / "minimal.conll")[0]
    table = _table(fixtures_dir)
    x = extract_anaphoric_input(doc, doc.mentions[0], table)[:BLOCK].reshape(10, D)
    # preceding words of a sentence-initial mention
    np.testing.assert_array_equal(x[3], table.unknown_vector)
    np.testing.assert_array_equal(x[4], table.unknown_vector)
    # head is "Smith", found through the lowercase fallback
    np.testing.assert_array_equal(x[0], table.entries["smith"])
    np.testing.assert_allclose(x[7], (table.entries["John"] + table.entries["smith"]) / 2)


def test_pair_input_requires_order(fixtures_dir):
    doc = read_conll(fixtures_dir / "minimal.conll")[0]
    with pytest.raises(ValueError):
        extract_pair_input(doc, doc.mentions[1], doc.mentions[0], _table(fixtures_dir))


def test_golden_feature_vectors(fixtures_dir):
    golden = json.loads((GOLDEN / "features.json").read_text())
    table = _table(fixtures_dir)
    params = init_params(ModelConfig(embedding_dim=3, m1=5, m2=4, m3=3, dropout=0.0), table, seed=0)
    for name, want in golden.items():
        doc = read_conll(fixtures_dir / f"{name}.conll")[0]
        ms = doc.mentions
        np.testing.assert_allclose(extract_pair_input(doc, ms[0], ms[1], table), want["pair_0_1"],
                                   rtol=0, atol=1e-12)
        np.testing.assert_allclose(extract_pair_input(doc, ms[0], ms[-1], table),
                                   want["pair_first_last"], rtol=0, atol=1e-12)
        for m, vec in zip(ms, want["anaphoric"]):
            np.testing.assert_allclose(extract_anaphoric_input(doc, m, table), vec, rtol=0, atol=1e-12)
        rows = score_document(params, doc)
        assert [len(r) for r in rows] == [i + 1 for i in range(len(ms))]
        for row, w in zip(rows, want["scores"]):
            np.testing.assert_allclose(row, w, rtol=0, atol=1e-12)
