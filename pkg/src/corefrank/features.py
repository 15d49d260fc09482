"""Input features for the mention-pair and anaphoricity networks.

Each mention contributes a block of ten embedding-sized slots:

    head, first, last, two preceding words, two following words,
    average of mention words, average of sentence words, average of document words

A pair input is ``[block(antecedent), block(mention), pair features]`` and an
anaphoricity input is ``[block(mention), anaphoricity features]``. Pair
features are one-hot mention distance and sentence distance buckets plus
same-speaker, exact-string-match and head-match flags. Anaphoricity features
are one-hot buckets of mention length and mention position in the document.

This inventory is a compact stand-in for a richer production feature set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus_io import Document, EmbeddingTable, Mention

N_WORD_SLOTS = 7
N_GROUP_SLOTS = 3
N_SLOTS = N_WORD_SLOTS + N_GROUP_SLOTS
N_BUCKETS = 10
N_PAIR_FLAGS = 3
UNKNOWN = 0


def bucket(d: int) -> int:
    """Bucket index over [0, 1, 2, 3, 4, 5-7, 8-15, 16-31, 32-63, 64+]."""
    if d < 0:
        raise ValueError(f"negative distance {d}")
    if d < 5:
        return d
    if d < 8:
        return 5
    if d < 16:
        return 6
    if d < 32:
        return 7
    if d < 64:
        return 8
    return 9


@dataclass(frozen=True)
class FeatureSpec:
    embedding_dim: int = 20

    @property
    def block_dim(self) -> int:
        return N_SLOTS * self.embedding_dim

    @property
    def pair_dim(self) -> int:
        return 2 * self.block_dim + 2 * N_BUCKETS + N_PAIR_FLAGS

    @property
    def anaphoric_dim(self) -> int:
        return self.block_dim + 2 * N_BUCKETS


class Vocabulary:
    """Maps words to embedding rows; row 0 is the unknown word."""

    def __init__(self, words):
        self.words = list(words)
        self.index = {w: i + 1 for i, w in enumerate(self.words)}

    def __len__(self):
        return len(self.words) + 1

    def __call__(self, word: str | None) -> int:
        if word is None:
            return UNKNOWN
        i = self.index.get(word)
        if i is None:
            i = self.index.get(word.lower(), UNKNOWN)
        return i


def embedding_matrix(table: EmbeddingTable) -> tuple[Vocabulary, np.ndarray]:
    vocab = Vocabulary(table.entries)
    rows = [table.unknown_vector] + [table.entries[w] for w in vocab.words]
    return vocab, np.array(rows, dtype=np.float64).reshape(len(vocab), table.dimension)


class DocFeatures:
    """Precomputed word indices and sparse features of one document."""

    def __init__(self, doc: Document, vocab: Vocabulary):
        self.doc = doc
        n = len(doc.mentions)
        self.n_mentions = n
        sent_ids = [np.array([vocab(t.surface) for t in sent], dtype=np.intp)
                    for sent in doc.sentences]
        self.sentence_of = np.array([m.sentence_index for m in doc.mentions], dtype=np.intp)

        slot_ids = np.zeros((n, N_WORD_SLOTS), dtype=np.intp)
        group_ids, group_owner, group_weight = [], [], []
        for m in doc.mentions:
            ids = sent_ids[m.sentence_index]
            def at(k):
                return int(ids[k]) if 0 <= k < len(ids) else UNKNOWN
            slot_ids[m.id] = [at(m.head_index), at(m.start), at(m.end),
                              at(m.start - 1), at(m.start - 2), at(m.end + 1), at(m.end + 2)]
            span = ids[m.start:m.end + 1]
            group_ids.append(span)
            group_owner.append(np.full(len(span), m.id, dtype=np.intp))
            group_weight.append(np.full(len(span), 1.0 / len(span)))
        self.slot_ids = slot_ids
        if n:
            self.span_ids = np.concatenate(group_ids)
            self.span_owner = np.concatenate(group_owner)
            self.span_weight = np.concatenate(group_weight)
        else:
            self.span_ids = self.span_owner = np.zeros(0, dtype=np.intp)
            self.span_weight = np.zeros(0)
        self.sent_ids = sent_ids
        self.doc_ids = np.concatenate(sent_ids) if sent_ids else np.zeros(0, dtype=np.intp)

        # pairs (c, m) for every m and every c < m, grouped by m
        self.pair_c = np.array([c for m in range(n) for c in range(m)], dtype=np.intp)
        self.pair_m = np.array([m for m in range(n) for c in range(m)], dtype=np.intp)
        self.pair_features = np.zeros((len(self.pair_c), 2 * N_BUCKETS + N_PAIR_FLAGS))
        lowered = [[w.lower() for w in doc.words(m)] for m in doc.mentions]
        heads = [doc.head_token(m) for m in doc.mentions]
        for p, (c, m) in enumerate(zip(self.pair_c, self.pair_m)):
            mc, mm = doc.mentions[c], doc.mentions[m]
            row = self.pair_features[p]
            row[bucket(m - c)] = 1
            row[N_BUCKETS + bucket(mm.sentence_index - mc.sentence_index)] = 1
            row[2 * N_BUCKETS] = float(heads[c].speaker == heads[m].speaker)
            row[2 * N_BUCKETS + 1] = float(lowered[c] == lowered[m])
            row[2 * N_BUCKETS + 2] = float(heads[c].surface.lower() == heads[m].surface.lower())
        self.anaphoric_features = np.zeros((n, 2 * N_BUCKETS))
        for m in doc.mentions:
            self.anaphoric_features[m.id, bucket(m.length - 1)] = 1
            self.anaphoric_features[m.id, N_BUCKETS + bucket(m.id)] = 1

    def mention_blocks(self, embed: np.ndarray) -> np.ndarray:
        """(n_mentions, N_SLOTS * d_w) embedding blocks."""
        n, d = self.n_mentions, embed.shape[1]
        blocks = np.zeros((n, N_SLOTS, d))
        if n == 0:
            return blocks.reshape(0, N_SLOTS * d)
        blocks[:, :N_WORD_SLOTS] = embed[self.slot_ids]
        np.add.at(blocks[:, N_WORD_SLOTS], self.span_owner,
                  embed[self.span_ids] * self.span_weight[:, None])
        sent_avg = np.stack([embed[ids].mean(axis=0) if len(ids) else np.zeros(d)
                             for ids in self.sent_ids])
        blocks[:, N_WORD_SLOTS + 1] = sent_avg[self.sentence_of]
        blocks[:, N_WORD_SLOTS + 2] = embed[self.doc_ids].mean(axis=0)
        return blocks.reshape(n, N_SLOTS * d)

    def block_backward(self, d_blocks: np.ndarray, d_embed: np.ndarray) -> None:
        """Accumulate embedding gradients from block gradients into ``d_embed``."""
        n, d = self.n_mentions, d_embed.shape[1]
        if n == 0:
            return
        g = d_blocks.reshape(n, N_SLOTS, d)
        np.add.at(d_embed, self.slot_ids, g[:, :N_WORD_SLOTS])
        np.add.at(d_embed, self.span_ids,
                  g[self.span_owner, N_WORD_SLOTS] * self.span_weight[:, None])
        for s, ids in enumerate(self.sent_ids):
            owners = self.sentence_of == s
            if owners.any() and len(ids):
                np.add.at(d_embed, ids, g[owners, N_WORD_SLOTS + 1].sum(axis=0) / len(ids))
        if len(self.doc_ids):
            np.add.at(d_embed, self.doc_ids, g[:, N_WORD_SLOTS + 2].sum(axis=0) / len(self.doc_ids))

    def pair_inputs(self, blocks: np.ndarray) -> np.ndarray:
        return np.hstack([blocks[self.pair_c], blocks[self.pair_m], self.pair_features])

    def anaphoric_inputs(self, blocks: np.ndarray) -> np.ndarray:
        return np.hstack([blocks, self.anaphoric_features])


def extract_pair_input(doc: Document, c: Mention, m: Mention, table: EmbeddingTable,
                       spec: FeatureSpec | None = None) -> np.ndarray:
    """Input vector of the pair network for candidate ``c`` and mention ``m``."""
    if c.id >= m.id:
        raise ValueError("candidate must precede the mention")
    vocab, embed = embedding_matrix(table)
    feats = DocFeatures(doc, vocab)
    blocks = feats.mention_blocks(embed)
    p = m.id * (m.id - 1) // 2 + c.id
    return feats.pair_inputs(blocks)[p]


def extract_anaphoric_input(doc: Document, m: Mention, table: EmbeddingTable,
                            spec: FeatureSpec | None = None) -> np.ndarray:
    vocab, embed = embedding_matrix(table)
    feats = DocFeatures(doc, vocab)
    return feats.anaphoric_inputs(feats.mention_blocks(embed))[m.id]
