"""Corpus ingestion and chunking.

A corpus is an immutable bag-of-words token stream; training partitions it
into chunks of whole documents balanced by token count, groups each chunk's
tokens by word, and gives every token an initial random topic.
"""

import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import CorpusFormatError, PartitionError
from .rng import Stream

CHUNK_MAGIC = b"GFCHUNK1"
_DIR_RECORD = np.dtype([("word", "<u4"), ("offset", "<u8"), ("len", "<u8")])


@dataclass(frozen=True)
class Corpus:
    """Tokenized document collection.

    Token order is grouped by document: doc_ptr[d]..doc_ptr[d+1] slices the
    doc/word arrays for document d.  Empty documents are dropped during
    construction, so every doc_lengths entry is positive.
    """

    num_docs: int
    vocab_size: int
    num_tokens: int
    doc_lengths: np.ndarray  # int64[num_docs]
    doc_ptr: np.ndarray  # int64[num_docs + 1]
    doc_ids: np.ndarray  # int32[num_tokens]
    word_ids: np.ndarray  # int32[num_tokens]
    vocab: list

    def doc_slice(self, d):
        return slice(int(self.doc_ptr[d]), int(self.doc_ptr[d + 1]))


def corpus_from_tokens(doc_ids, word_ids, vocab_size, vocab=None):
    """Assemble a Corpus from parallel (doc, word) token arrays.

    Documents that own no tokens are dropped and the remaining ids
    compacted in order.  Tokens are stably sorted by document.
    """
    doc_ids = np.asarray(doc_ids, dtype=np.int64)
    word_ids = np.asarray(word_ids, dtype=np.int64)
    if doc_ids.size == 0:
        raise CorpusFormatError("corpus has no tokens")
    if word_ids.min() < 0 or word_ids.max() >= vocab_size:
        raise CorpusFormatError("word id outside [0, vocab_size)")

    order = np.argsort(doc_ids, kind="stable")
    doc_ids = doc_ids[order]
    word_ids = word_ids[order]

    kept, inverse = np.unique(doc_ids, return_inverse=True)
    doc_ids = inverse.astype(np.int32)
    num_docs = len(kept)
    doc_lengths = np.bincount(doc_ids, minlength=num_docs).astype(np.int64)
    doc_ptr = np.zeros(num_docs + 1, dtype=np.int64)
    np.cumsum(doc_lengths, out=doc_ptr[1:])
    if vocab is None:
        vocab = [f"w{v}" for v in range(vocab_size)]
    return Corpus(
        num_docs=num_docs,
        vocab_size=int(vocab_size),
        num_tokens=int(doc_ids.size),
        doc_lengths=doc_lengths,
        doc_ptr=doc_ptr,
        doc_ids=doc_ids,
        word_ids=word_ids.astype(np.int32),
        vocab=vocab,
    )


def _read_bow_header(lines):
    """Parse the three UCI header lines (D, W, NNZ)."""
    if len(lines) < 3:
        raise CorpusFormatError("docword header truncated: expected 3 lines")
    values = []
    for lineno, raw in enumerate(lines[:3], start=1):
        try:
            values.append(int(raw.strip()))
        except ValueError:
            raise CorpusFormatError(
                f"docword line {lineno}: malformed header value {raw.strip()!r}"
            ) from None
    return tuple(values)


def load_uci_bow(docword_path, vocab_path):
    """Load a UCI bag-of-words corpus (docword + vocab file pair).

    The docword file carries three header lines (D, W, NNZ) followed by NNZ
    "docID wordID count" triples with 1-based ids.  Each triple expands into
    `count` tokens.  Ids are converted to 0-based; documents left empty are
    dropped and D adjusted.
    """
    with open(docword_path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    num_docs, num_words, nnz = _read_bow_header(lines)

    docs = np.empty(nnz, dtype=np.int64)
    words = np.empty(nnz, dtype=np.int64)
    counts = np.empty(nnz, dtype=np.int64)
    body = lines[3:]
    if len([ln for ln in body if ln.strip()]) != nnz:
        raise CorpusFormatError(
            f"docword body: expected {nnz} triples, found "
            f"{len([ln for ln in body if ln.strip()])}"
        )
    row = 0
    for lineno, raw in enumerate(body, start=4):
        text = raw.strip()
        if not text:
            continue
        parts = text.split()
        if len(parts) != 3:
            raise CorpusFormatError(f"docword line {lineno}: expected 3 fields")
        try:
            d, w, c = (int(p) for p in parts)
        except ValueError:
            raise CorpusFormatError(
                f"docword line {lineno}: non-integer field"
            ) from None
        if not 1 <= d <= num_docs:
            raise CorpusFormatError(
                f"docword line {lineno}: docID {d} outside [1, {num_docs}]"
            )
        if not 1 <= w <= num_words:
            raise CorpusFormatError(
                f"docword line {lineno}: wordID {w} outside [1, {num_words}]"
            )
        if c <= 0:
            raise CorpusFormatError(f"docword line {lineno}: count {c} must be > 0")
        docs[row], words[row], counts[row] = d - 1, w - 1, c
        row += 1

    vocab = _read_vocab(vocab_path, num_words)
    doc_ids = np.repeat(docs, counts)
    word_ids = np.repeat(words, counts)
    return corpus_from_tokens(doc_ids, word_ids, num_words, vocab)


def _read_vocab(vocab_path, num_words):
    with open(vocab_path, "r", encoding="utf-8") as fh:
        vocab = [line.rstrip("\n") for line in fh]
    while vocab and vocab[-1] == "":
        vocab.pop()
    if len(vocab) != num_words:
        raise CorpusFormatError(
            f"vocab file has {len(vocab)} entries, docword header says {num_words}"
        )
    return vocab


@dataclass(frozen=True)
class Chunk:
    """A worker-sized slice of the corpus: whole documents, word-grouped.

    Token arrays are stored in word-group order.  The group directory
    (group_words/group_offsets/group_sizes) defines processing order and is
    the only part `sort_word_groups_desc` permutes.  dw_ptr/dw_tok index the
    same tokens by (chunk-local) document.
    """

    chunk_id: int
    doc_lo: int
    doc_hi: int  # half-open: documents [doc_lo, doc_hi)
    token_count: int
    doc_ids: np.ndarray  # int32[token_count], global doc ids
    word_ids: np.ndarray  # int32[token_count]
    assignments: np.ndarray  # uint16[token_count]
    group_words: np.ndarray  # int32[num_groups]
    group_offsets: np.ndarray  # int64[num_groups]
    group_sizes: np.ndarray  # int64[num_groups]
    dw_ptr: np.ndarray  # int64[num_local_docs + 1]
    dw_tok: np.ndarray  # int64[token_count]

    @property
    def num_local_docs(self):
        return self.doc_hi - self.doc_lo

    @property
    def num_groups(self):
        return len(self.group_words)

    def word_groups(self):
        """Iterate (word_id, token index slice) in processing order."""
        for w, off, size in zip(self.group_words, self.group_offsets, self.group_sizes):
            yield int(w), slice(int(off), int(off + size))

    def doc_token_positions(self, local_doc):
        """Positions (into the token arrays) of one local document's tokens."""
        return self.dw_tok[self.dw_ptr[local_doc] : self.dw_ptr[local_doc + 1]]


def _doc_word_map(doc_ids, doc_lo, num_local_docs):
    local = doc_ids.astype(np.int64) - doc_lo
    dw_tok = np.argsort(local, kind="stable").astype(np.int64)
    counts = np.bincount(local, minlength=num_local_docs)
    dw_ptr = np.zeros(num_local_docs + 1, dtype=np.int64)
    np.cumsum(counts, out=dw_ptr[1:])
    return dw_ptr, dw_tok


def greedy_boundaries(doc_lengths, num_chunks):
    """Contiguous document ranges balanced by token count.

    Scans documents in order; a chunk closes as soon as its running token
    count reaches ceil(remaining_tokens / remaining_chunks), while always
    leaving at least one document for every later chunk.
    """
    num_docs = len(doc_lengths)
    if num_chunks > num_docs:
        raise PartitionError(
            f"cannot give every chunk a document: {num_chunks} chunks > {num_docs} docs"
        )
    bounds = []
    remaining = int(np.sum(doc_lengths))
    lo = 0
    for c in range(num_chunks):
        left = num_chunks - c
        hi_max = num_docs - (left - 1)
        target = -(-remaining // left)  # ceil division
        acc = 0
        hi = lo
        while hi < hi_max and acc < target:
            acc += int(doc_lengths[hi])
            hi += 1
        bounds.append((lo, hi))
        remaining -= acc
        lo = hi
    return bounds


def partition(corpus, num_chunks, num_topics, seed):
    """Split the corpus into word-grouped chunks with random initial topics.

    Each chunk's initial assignments come from a stream keyed by
    (seed, chunk_id), so results do not depend on scheduling.
    """
    if num_chunks < 1:
        raise PartitionError("need at least one chunk")
    if not 1 <= num_topics < 2**16:
        raise ValueError(f"topic count {num_topics} outside [1, 65536)")
    bounds = greedy_boundaries(corpus.doc_lengths, num_chunks)
    chunks = []
    for cid, (lo, hi) in enumerate(bounds):
        sl = slice(int(corpus.doc_ptr[lo]), int(corpus.doc_ptr[hi]))
        words = corpus.word_ids[sl]
        docs = corpus.doc_ids[sl]
        order = np.argsort(words, kind="stable")
        words = np.ascontiguousarray(words[order])
        docs = np.ascontiguousarray(docs[order])

        group_words, group_starts, group_sizes = np.unique(
            words, return_index=True, return_counts=True
        )
        dw_ptr, dw_tok = _doc_word_map(docs, lo, hi - lo)

        stream = Stream(seed, cid)
        topics = np.minimum(
            (stream.uniforms(len(words)) * num_topics).astype(np.int64),
            num_topics - 1,
        ).astype(np.uint16)

        chunks.append(
            Chunk(
                chunk_id=cid,
                doc_lo=lo,
                doc_hi=hi,
                token_count=len(words),
                doc_ids=docs,
                word_ids=words,
                assignments=topics,
                group_words=group_words.astype(np.int32),
                group_offsets=group_starts.astype(np.int64),
                group_sizes=group_sizes.astype(np.int64),
                dw_ptr=dw_ptr,
                dw_tok=dw_tok,
            )
        )
    return chunks


def sort_word_groups_desc(chunk):
    """Reorder the group directory by descending size (ties: ascending word).

    Heavy words go first so a parallel pass starts its long groups early.
    Token arrays are untouched; only the directory permutes.
    """
    order = np.lexsort((chunk.group_words, -chunk.group_sizes))
    return replace(
        chunk,
        group_words=chunk.group_words[order],
        group_offsets=chunk.group_offsets[order],
        group_sizes=chunk.group_sizes[order],
    )


def save_chunk(chunk, path):
    """Write a chunk to the on-disk store.

    Layout: magic "GFCHUNK1"; little-endian u64 chunk_id, doc_lo, doc_hi,
    token_count; token arrays in word-group order (doc_id u32[], word_id
    u32[], topic u16[]); then the group directory as (word_id u32,
    offset u64, len u64) records in processing order.
    """
    directory = np.empty(chunk.num_groups, dtype=_DIR_RECORD)
    directory["word"] = chunk.group_words
    directory["offset"] = chunk.group_offsets
    directory["len"] = chunk.group_sizes
    with open(path, "wb") as fh:
        fh.write(CHUNK_MAGIC)
        fh.write(
            struct.pack(
                "<4Q", chunk.chunk_id, chunk.doc_lo, chunk.doc_hi, chunk.token_count
            )
        )
        fh.write(chunk.doc_ids.astype("<u4").tobytes())
        fh.write(chunk.word_ids.astype("<u4").tobytes())
        fh.write(chunk.assignments.astype("<u2").tobytes())
        fh.write(directory.tobytes())


def load_chunk(path):
    """Read a chunk written by save_chunk; the doc-word map is rebuilt."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(CHUNK_MAGIC)] != CHUNK_MAGIC:
        raise CorpusFormatError(f"{path}: bad chunk magic")
    head = len(CHUNK_MAGIC)
    chunk_id, doc_lo, doc_hi, token_count = struct.unpack_from("<4Q", blob, head)
    pos = head + 32
    doc_ids = np.frombuffer(blob, dtype="<u4", count=token_count, offset=pos)
    pos += 4 * token_count
    word_ids = np.frombuffer(blob, dtype="<u4", count=token_count, offset=pos)
    pos += 4 * token_count
    topics = np.frombuffer(blob, dtype="<u2", count=token_count, offset=pos)
    pos += 2 * token_count
    tail = len(blob) - pos
    if tail % _DIR_RECORD.itemsize:
        raise CorpusFormatError(f"{path}: truncated group directory")
    directory = np.frombuffer(blob, dtype=_DIR_RECORD, offset=pos)
    doc_ids = doc_ids.astype(np.int32)
    dw_ptr, dw_tok = _doc_word_map(doc_ids, doc_lo, doc_hi - doc_lo)
    return Chunk(
        chunk_id=int(chunk_id),
        doc_lo=int(doc_lo),
        doc_hi=int(doc_hi),
        token_count=int(token_count),
        doc_ids=doc_ids,
        word_ids=word_ids.astype(np.int32),
        assignments=topics.astype(np.uint16).copy(),
        group_words=directory["word"].astype(np.int32),
        group_offsets=directory["offset"].astype(np.int64),
        group_sizes=directory["len"].astype(np.int64),
        dw_ptr=dw_ptr,
        dw_tok=dw_tok,
    )
