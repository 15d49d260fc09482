"""Reading and writing CoNLL-2012 coreference files and word-embedding files.

Canonical output form (what :func:`write_conll` produces and what round-trips
byte for byte):

* ``#begin document (<key>); part <nnn>`` opens a document, ``#end document``
  closes it, every line ends with ``\\n``;
* token lines are tab separated; every sentence is followed by one blank line;
* the coreference column uses ``-`` for no annotation, otherwise ``|``-joined
  parts ordered as closing parts (innermost first), one-token parts, then
  opening parts (outermost first);
* chains are numbered 0, 1, ... in order of their first mention; mentions that
  are annotated but belong to no gold cluster (singleton chains) take the next
  numbers in mention order.

Extended fixture format: one extra column just before the coreference column
holds head markers. ``-`` marks no head; otherwise ``|``-joined chain numbers,
where ``n`` says this token is the head of the innermost chain-``n`` mention
covering it. A document is read as extended when every token line carries a
column of that shape in that position (standard CoNLL never does: that column
is the named-entity or a predicate-argument column, written with ``*``).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

logger = logging.getLogger(__name__)

BEGIN_RE = re.compile(r"^#begin document \((.*)\); part (\d+)\s*$")
END_RE = re.compile(r"^#end document\s*$")
PART_RE = re.compile(r"^(\()?(\d+)(\))?$")
HEAD_COLUMN_RE = re.compile(r"^(-|\d+(\|\d+)*)$")

# standard CoNLL-2012 column positions
WORD_COL = 3
POS_COL = 4
SPEAKER_COL = 9
MIN_COLUMNS = 12


class ConllError(ValueError):
    """Malformed CoNLL input or an unwritable document."""


@dataclass(frozen=True)
class Token:
    surface: str
    sentence_index: int
    token_index: int
    speaker: str = "-"
    pos_tag: str = ""
    # every column except the coreference (and head) column, verbatim
    columns: tuple[str, ...] = ()


@dataclass(frozen=True, order=True)
class Mention:
    sentence_index: int
    start: int
    end: int
    id: int = field(compare=False)
    head_index: int = field(compare=False)

    @property
    def span(self) -> tuple[int, int, int]:
        return (self.sentence_index, self.start, self.end)

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass
class Document:
    doc_key: str
    sentences: list[list[Token]]
    mentions: list[Mention]
    gold: list[frozenset[int]]
    part: str = "000"
    # whether the head column is written; not part of document identity
    head_column: bool = field(default=False, compare=False)

    @property
    def genre(self) -> str:
        return genre_of(self.doc_key)

    @property
    def speakers(self) -> list[list[str]]:
        return [[t.speaker for t in sent] for sent in self.sentences]

    def words(self, mention: Mention) -> list[str]:
        sent = self.sentences[mention.sentence_index]
        return [t.surface for t in sent[mention.start:mention.end + 1]]

    def head_token(self, mention: Mention) -> Token:
        return self.sentences[mention.sentence_index][mention.head_index]

    def gold_labels(self) -> list[int | None]:
        """Gold cluster index per mention id, ``None`` for mentions in no cluster."""
        labels: list[int | None] = [None] * len(self.mentions)
        for k, cluster in enumerate(self.gold):
            for m in cluster:
                labels[m] = k
        return labels


def genre_of(doc_key: str) -> str:
    """CoNLL document keys start with the genre directory (``bc/cctv/00/...``)."""
    return doc_key.split("/", 1)[0] if "/" in doc_key else ""


def sort_clusters(clusters: Iterable[Iterable[int]]) -> list[frozenset[int]]:
    return sorted((frozenset(c) for c in clusters), key=min)


# ---------------------------------------------------------------- reading


def _parse_coref_column(value: str, lineno: int) -> list[tuple[str, int]]:
    if value == "-":
        return []
    parts = []
    for piece in value.split("|"):
        m = PART_RE.match(piece)
        if not m or (m.group(1) is None and m.group(3) is None):
            raise ConllError(f"line {lineno}: bad coreference annotation {value!r}")
        kind = ("single" if m.group(1) and m.group(3)
                else "open" if m.group(1) else "close")
        parts.append((kind, int(m.group(2))))
    return parts


class _DocBuilder:
    def __init__(self, key: str, part: str, lineno: int):
        self.key = key
        self.part = part
        self.lineno = lineno
        self.rows: list[tuple[list[str], int]] = []
        self.sentence_rows: list[list[tuple[list[str], int]]] = []

    def add_line(self, fields: list[str], lineno: int) -> None:
        self.rows.append((fields, lineno))

    def end_sentence(self) -> None:
        if self.rows:
            self.sentence_rows.append(self.rows)
            self.rows = []

    def build(self) -> tuple[Document, int]:
        self.end_sentence()
        all_rows = [r for sent in self.sentence_rows for r in sent]
        extended = bool(all_rows) and all(
            len(f) >= 3 and HEAD_COLUMN_RE.match(f[-2]) for f, _ in all_rows)

        sentences: list[list[Token]] = []
        spans: dict[tuple[int, int, int], int] = {}  # span -> chain
        heads: dict[tuple[int, int, int], int] = {}
        for s, rows in enumerate(self.sentence_rows):
            tokens = []
            stacks: dict[int, list[int]] = {}
            closed: list[tuple[int, int, int]] = []  # (chain, start, end)
            for t, (fields, lineno) in enumerate(rows):
                if len(fields) < 2:
                    raise ConllError(f"line {lineno}: too few columns")
                coref = fields[-1]
                columns = tuple(fields[:-2] if extended else fields[:-1])
                if len(columns) >= MIN_COLUMNS - 1:
                    surface, pos, speaker = columns[WORD_COL], columns[POS_COL], columns[SPEAKER_COL]
                else:
                    surface = columns[WORD_COL] if len(columns) > WORD_COL else columns[0]
                    pos = columns[POS_COL] if len(columns) > POS_COL else ""
                    speaker = "-"
                tokens.append(Token(surface, s, t, speaker, pos, columns))
                for kind, chain in _parse_coref_column(coref, lineno):
                    if kind == "open":
                        stacks.setdefault(chain, []).append(t)
                    elif kind == "close":
                        if not stacks.get(chain):
                            raise ConllError(
                                f"line {lineno}: closing chain {chain} that was never opened")
                        closed.append((chain, stacks[chain].pop(), t))
                    else:
                        closed.append((chain, t, t))
                if extended and fields[-2] != "-":
                    for piece in fields[-2].split("|"):
                        heads[(s, t, int(piece))] = lineno
            for chain, starts in stacks.items():
                if starts:
                    lineno = rows[starts[-1]][1]
                    raise ConllError(f"line {lineno}: unclosed span of chain {chain}")
            for chain, start, end in closed:
                span = (s, start, end)
                if span in spans:
                    lineno = rows[end][1]
                    if spans[span] == chain:
                        raise ConllError(
                            f"line {lineno}: duplicate span in chain {chain}")
                    raise ConllError(
                        f"line {lineno}: span annotated in chains {spans[span]} and {chain}")
                spans[span] = chain
            sentences.append(tokens)

        ordered = sorted(spans)
        head_of: dict[tuple[int, int, int], int] = {}
        for (s, t, chain), lineno in heads.items():
            covering = [sp for sp in ordered
                        if sp[0] == s and sp[1] <= t <= sp[2] and spans[sp] == chain]
            if not covering:
                raise ConllError(f"line {lineno}: head marker {chain} outside any chain-{chain} span")
            inner = min(covering, key=lambda sp: sp[2] - sp[1])
            head_of[inner] = t
        mentions = [Mention(s, a, b, id=i, head_index=head_of.get((s, a, b), b))
                    for i, (s, a, b) in enumerate(ordered)]

        chains: dict[int, list[int]] = {}
        for m in mentions:
            chains.setdefault(spans[m.span], []).append(m.id)
        gold = [ids for ids in chains.values() if len(ids) > 1]
        doc = Document(self.key, sentences, mentions, sort_clusters(gold),
                       part=self.part, head_column=extended)
        return doc, len(chains) - len(gold)


def parse_conll(text: str | TextIO, warn_singletons: bool = True) -> list[Document]:
    """Parse CoNLL-2012 text into documents.

    Each annotated span becomes a mention; chains with two or more mentions
    become gold clusters and single-mention chains are dropped from the gold
    clustering (the mention itself is kept). Raises :class:`ConllError`
    naming the offending line.
    """
    lines = text.splitlines() if isinstance(text, str) else (l.rstrip("\n") for l in text)
    docs: list[Document] = []
    builder: _DocBuilder | None = None
    dropped = 0
    for lineno, line in enumerate(lines, 1):
        m = BEGIN_RE.match(line)
        if m:
            if builder is not None:
                raise ConllError(f"line {lineno}: #begin inside an open document")
            builder = _DocBuilder(m.group(1), m.group(2), lineno)
            continue
        if END_RE.match(line):
            if builder is None:
                raise ConllError(f"line {lineno}: #end without #begin")
            doc, n_single = builder.build()
            docs.append(doc)
            dropped += n_single
            builder = None
            continue
        if line.startswith("#"):
            continue
        if not line.strip():
            if builder is not None:
                builder.end_sentence()
            continue
        if builder is None:
            raise ConllError(f"line {lineno}: token line outside a document")
        builder.add_line(line.split(), lineno)
    if builder is not None:
        raise ConllError(f"line {builder.lineno}: document {builder.key!r} is never closed")
    if dropped and warn_singletons:
        logger.warning("dropped %d singleton chains from the gold clusters of %d documents",
                       dropped, len(docs))
    return docs


def read_conll(path, warn_singletons: bool = True) -> list[Document]:
    with open(path, encoding="utf-8") as f:
        text = f.read()
    try:
        return parse_conll(text, warn_singletons=warn_singletons)
    except ConllError as e:
        raise ConllError(f"{path}: {e}") from None


# ---------------------------------------------------------------- writing


def chain_numbers(doc: Document) -> dict[int, int]:
    """Canonical chain number for every mention id."""
    numbers = {}
    for k, cluster in enumerate(sort_clusters(doc.gold)):
        for m in cluster:
            numbers[m] = k
    nxt = len(doc.gold)
    for m in doc.mentions:
        if m.id not in numbers:
            numbers[m.id] = nxt
            nxt += 1
    return numbers


def _token_columns(tok: Token, doc: Document) -> tuple[str, ...]:
    if tok.columns:
        return tok.columns
    speaker = tok.speaker or "-"
    return (doc.doc_key, str(int(doc.part)), str(tok.token_index), tok.surface,
            tok.pos_tag or "-", "*", "-", "-", "-", speaker, "*")


def _check_crossing(doc: Document, numbers: dict[int, int]) -> None:
    """Crossing spans of one chain have no unambiguous bracket notation."""
    by_chain: dict[tuple[int, int], list[Mention]] = {}
    for m in doc.mentions:
        by_chain.setdefault((numbers[m.id], m.sentence_index), []).append(m)
    for group in by_chain.values():
        for x in group:
            for y in group:
                if x.start < y.start <= x.end < y.end:
                    raise ConllError(f"{doc.doc_key}: mentions {x.id} and {y.id} cross inside "
                                     f"chain {numbers[x.id]} and cannot be written")


def write_conll(docs: Iterable[Document]) -> str:
    out: list[str] = []
    for doc in docs:
        numbers = chain_numbers(doc)
        closes: dict[tuple[int, int], list[tuple[int, int]]] = {}
        singles: dict[tuple[int, int], list[int]] = {}
        opens: dict[tuple[int, int], list[tuple[int, int]]] = {}
        heads: dict[tuple[int, int], list[int]] = {}
        write_heads = doc.head_column
        for m in doc.mentions:
            s = m.sentence_index
            if not (0 <= s < len(doc.sentences)) or not (
                    0 <= m.start <= m.head_index <= m.end < len(doc.sentences[s])):
                raise ConllError(f"{doc.doc_key}: mention {m.id} out of sentence bounds")
            n = numbers[m.id]
            if m.start == m.end:
                singles.setdefault((s, m.start), []).append(n)
            else:
                opens.setdefault((s, m.start), []).append((-m.end, n))
                closes.setdefault((s, m.end), []).append((-m.start, n))
            heads.setdefault((s, m.head_index), []).append(n)
            if m.head_index != m.end:
                write_heads = True
        _check_crossing(doc, numbers)

        out.append(f"#begin document ({doc.doc_key}); part {doc.part}\n")
        for s, sent in enumerate(doc.sentences):
            for t, tok in enumerate(sent):
                parts = [f"{n})" for _, n in sorted(closes.get((s, t), []))]
                parts += [f"({n})" for n in sorted(singles.get((s, t), []))]
                parts += [f"({n}" for _, n in sorted(opens.get((s, t), []))]
                cols = list(_token_columns(tok, doc))
                if write_heads:
                    hs = sorted(heads.get((s, t), []))
                    cols.append("|".join(map(str, hs)) if hs else "-")
                cols.append("|".join(parts) if parts else "-")
                out.append("\t".join(cols) + "\n")
            out.append("\n")
        out.append("#end document\n")
    return "".join(out)


# ---------------------------------------------------------------- embeddings


@dataclass
class EmbeddingTable:
    dimension: int
    entries: dict[str, np.ndarray]
    unknown_vector: np.ndarray

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, word: str) -> np.ndarray:
        v = self.entries.get(word)
        if v is None:
            v = self.entries.get(word.lower(), self.unknown_vector)
        return v


def parse_embeddings(text: str | TextIO, dimension: int) -> EmbeddingTable:
    """One record per line: a word followed by ``dimension`` reals.

    The unknown-word vector is the mean of all stored vectors (zeros when the
    table is empty). A repeated word keeps its last vector.
    """
    if dimension <= 0:
        raise ValueError("dimension must be positive")
    lines = text.splitlines() if isinstance(text, str) else (l.rstrip("\n") for l in text)
    entries: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines, 1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != dimension + 1:
            raise ConllError(
                f"line {lineno}: expected {dimension + 1} fields, got {len(fields)}")
        try:
            vec = np.array([float(x) for x in fields[1:]], dtype=np.float64)
        except ValueError as e:
            raise ConllError(f"line {lineno}: {e}") from None
        if fields[0] in entries:
            logger.warning("line %d: duplicate embedding for %r, keeping the last", lineno, fields[0])
        entries[fields[0]] = vec
    if entries:
        unknown = np.mean(np.stack(list(entries.values())), axis=0)
    else:
        unknown = np.zeros(dimension)
    return EmbeddingTable(dimension, entries, unknown)


def read_embeddings(path, dimension: int) -> EmbeddingTable:
    with open(path, encoding="utf-8") as f:
        return parse_embeddings(f.read(), dimension)


def write_embeddings(table: EmbeddingTable) -> str:
    return "".join(word + " " + " ".join(repr(float(x)) for x in vec) + "\n"
                   for word, vec in table.entries.items())
