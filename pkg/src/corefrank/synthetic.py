"""Synthetic coreference corpus whose features determine the gold clustering.

Every entity in a document has its own head word, so two mentions corefer
exactly when their heads match. The first mention of an entity starts with
``a``; later mentions start with ``the`` or, for proper-noun entities, are the
bare name. A scorer that learns "head match" for pairs and "first word is
``a``" for anaphoricity is perfect on this data.
"""

from __future__ import annotations

import numpy as np

from .corpus_io import Document, EmbeddingTable, Mention, Token, sort_clusters

COMMON = [f"thing{i}" for i in range(40)]
PROPER = [f"Name{i}" for i in range(40)]
FILLER = [f"w{i}" for i in range(30)]
VOCAB = ["a", "the"] + COMMON + PROPER + FILLER


def make_embeddings(dim: int = 20, seed: int = 0) -> EmbeddingTable:
    rng = np.random.default_rng(seed)
    entries = {w: rng.normal(0, 1 / np.sqrt(dim), size=dim) for w in VOCAB}
    unknown = np.mean(np.stack(list(entries.values())), axis=0)
    return EmbeddingTable(dim, entries, unknown)


def make_document(rng: np.random.Generator, key: str, n_entities: tuple[int, int] = (3, 6)) -> Document:
    k = int(rng.integers(n_entities[0], n_entities[1] + 1))
    proper = rng.random(k) < 0.4
    commons = list(rng.choice(COMMON, size=k, replace=False))
    propers = list(rng.choice(PROPER, size=k, replace=False))
    # entity id per mention slot, in order of appearance
    slots = []
    for e in range(k):
        slots += [e] * int(rng.integers(1, 5))
    rng.shuffle(slots)

    n_sent = max(2, len(slots) // 2)
    per_sentence = np.array_split(np.arange(len(slots)), n_sent)
    seen: set[int] = set()
    sentences: list[list[Token]] = []
    spans: list[tuple[int, int, int, int]] = []  # sentence, start, end, entity
    for s, idx in enumerate(per_sentence):
        speaker = f"spk{s % 2 + 1}"
        words: list[tuple[str, str]] = []
        for j in idx:
            e = slots[j]
            for _ in range(int(rng.integers(0, 3))):
                words.append((str(rng.choice(FILLER)), "VB"))
            head = propers[e] if proper[e] else commons[e]
            pos = "NNP" if proper[e] else "NN"
            start = len(words)
            if e not in seen:
                words += [("a", "DT"), (head, pos)]
            elif proper[e] and rng.random() < 0.5:
                words.append((head, pos))
            else:
                words += [("the", "DT"), (head, pos)]
            spans.append((s, start, len(words) - 1, e))
            seen.add(e)
        words.append((str(rng.choice(FILLER)), "VB"))
        sentences.append([Token(w, s, t, speaker, p) for t, (w, p) in enumerate(words)])
    spans.sort()
    mentions = [Mention(s, a, b, id=i, head_index=b) for i, (s, a, b, _) in enumerate(spans)]
    by_entity: dict[int, list[int]] = {}
    for i, (_, _, _, e) in enumerate(spans):
        by_entity.setdefault(e, []).append(i)
    gold = sort_clusters(ids for ids in by_entity.values() if len(ids) > 1)
    return Document(key, sentences, mentions, gold)


def make_corpus(n_docs: int, seed: int = 0, prefix: str = "nw/synth", telephone_every: int = 4):
    rng = np.random.default_rng(seed)
    docs = []
    for d in range(n_docs):
        genre_prefix = "tc/synth" if telephone_every and d % telephone_every == telephone_every - 1 else prefix
        docs.append(make_document(rng, f"{genre_prefix}/{seed:02d}/doc_{d:03d}"))
    return docs
