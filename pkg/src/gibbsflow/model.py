"""Count matrices and their deferred rebuild procedures.

The document-topic matrix is kept sparse (compressed rows, 16-bit ids and
counts); the topic-word matrix is dense with 64-bit per-topic totals.  Both
are rebuilt from token assignments after a sampling pass rather than
maintained incrementally, so a rebuild is a pure function of assignments.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CorpusFormatError, CountOverflowError, ShapeMismatchError

SNAPSHOT_MAGIC = b"GFSNAP1"


@dataclass
class ThetaRows:
    """Sparse document-topic counts in compressed-row form.

    topic_ids are strictly increasing within a row and counts are >= 1;
    a row's counts sum to the document's length.
    """

    row_ptr: np.ndarray  # int64[D+1]
    topic_ids: np.ndarray  # uint16[NNZ]
    counts: np.ndarray  # uint16[NNZ]
    num_topics: int

    @property
    def num_rows(self):
        return len(self.row_ptr) - 1

    @property
    def nnz(self):
        return int(self.row_ptr[-1])

    def row(self, d):
        """(topic_ids, counts) views for row d."""
        sl = slice(int(self.row_ptr[d]), int(self.row_ptr[d + 1]))
        return self.topic_ids[sl], self.counts[sl]

    def row_nnz(self, d):
        return int(self.row_ptr[d + 1] - self.row_ptr[d])


@dataclass
class PhiMatrix:
    """Dense topic-word counts plus per-topic totals.

    counts is uint32 by default; uint16 halves the footprint but raises on
    overflow.  topic_totals[k] always equals the row sum of counts[k].
    """

    counts: np.ndarray  # uint16 or uint32, [K, V]
    topic_totals: np.ndarray  # int64[K]

    @property
    def num_topics(self):
        return self.counts.shape[0]

    @property
    def vocab_size(self):
        return self.counts.shape[1]

    @property
    def width(self):
        return self.counts.dtype.itemsize * 8

    def copy(self):
        return PhiMatrix(self.counts.copy(), self.topic_totals.copy())


# A replica has the same shape as the global matrix; it counts only the
# tokens of the chunks one worker owns, and the global matrix is the
# elementwise sum of all replicas.
PhiReplica = PhiMatrix


def phi_dtype(width):
    if width == 16:
        return np.uint16
    if width == 32:
        return np.uint32
    raise ValueError(f"phi width must be 16 or 32, got {width}")


def rebuild_theta_row(chunk, doc, num_topics):
    """Sparse topic histogram of one document's current assignments.

    `doc` is a global document id inside chunk's range.  A dense histogram
    is filled through the doc-word map, then compacted to (sorted topic_ids,
    counts).
    """
    local = doc - chunk.doc_lo
    positions = chunk.doc_token_positions(local)
    dense = np.bincount(chunk.assignments[positions], minlength=num_topics)
    if dense.max(initial=0) > np.iinfo(np.uint16).max:
        raise CountOverflowError(
            f"document {doc}: topic count {int(dense.max())} exceeds 16-bit range"
        )
    ids = np.flatnonzero(dense)
    return ids.astype(np.uint16), dense[ids].astype(np.uint16)


def rebuild_theta(chunk, num_topics):
    """ThetaRows over the chunk's documents, rebuilt from assignments."""
    ids_parts = []
    count_parts = []
    row_ptr = np.zeros(chunk.num_local_docs + 1, dtype=np.int64)
    for local in range(chunk.num_local_docs):
        ids, counts = rebuild_theta_row(chunk, chunk.doc_lo + local, num_topics)
        ids_parts.append(ids)
        count_parts.append(counts)
        row_ptr[local + 1] = row_ptr[local] + len(ids)
    return ThetaRows(
        row_ptr=row_ptr,
        topic_ids=np.concatenate(ids_parts) if ids_parts else np.empty(0, np.uint16),
        counts=np.concatenate(count_parts) if count_parts else np.empty(0, np.uint16),
        num_topics=num_topics,
    )


def concat_theta(parts):
    """Stack per-chunk ThetaRows (in document order) into one matrix."""
    row_ptr = [np.zeros(1, dtype=np.int64)]
    base = 0
    for part in parts:
        row_ptr.append(part.row_ptr[1:] + base)
        base += part.nnz
    return ThetaRows(
        row_ptr=np.concatenate(row_ptr),
        topic_ids=np.concatenate([p.topic_ids for p in parts]),
        counts=np.concatenate([p.counts for p in parts]),
        num_topics=parts[0].num_topics,
    )


def rebuild_phi_replica(chunk, num_topics, vocab_size, width=32):
    """Count the chunk's (topic, word) pairs into a fresh replica.

    Equals the sequential count whatever order the accumulation ran in;
    words owned by different groups touch disjoint columns.
    """
    dtype = phi_dtype(width)
    flat = chunk.assignments.astype(np.int64) * vocab_size + chunk.word_ids
    dense = np.bincount(flat, minlength=num_topics * vocab_size)
    dense = dense.reshape(num_topics, vocab_size)
    if dense.max(initial=0) > np.iinfo(dtype).max:
        k, v = np.unravel_index(int(dense.argmax()), dense.shape)
        raise CountOverflowError(
            f"phi cell (topic {k}, word {v}) count {int(dense[k, v])} "
            f"exceeds {width}-bit range"
        )
    return PhiMatrix(
        counts=dense.astype(dtype),
        topic_totals=dense.sum(axis=1, dtype=np.int64),
    )


def zero_phi(num_topics, vocab_size, width=32):
    return PhiMatrix(
        counts=np.zeros((num_topics, vocab_size), dtype=phi_dtype(width)),
        topic_totals=np.zeros(num_topics, dtype=np.int64),
    )


@dataclass
class ConservationReport:
    ok: bool
    detail: str

    def __bool__(self):
        return self.ok


def check_conservation(theta, phi, corpus):
    """Cross-check the two count matrices against the corpus.

    Verifies row sums of theta equal document lengths, column sums of theta
    equal phi's topic totals, and totals sum to the token count.  Violations
    are report content, not exceptions.
    """
    row_sums = np.zeros(theta.num_rows, dtype=np.int64)
    entry_doc = np.repeat(np.arange(theta.num_rows), np.diff(theta.row_ptr))
    np.add.at(row_sums, entry_doc, theta.counts.astype(np.int64))
    bad = np.flatnonzero(row_sums != corpus.doc_lengths)
    if bad.size:
        d = int(bad[0])
        return ConservationReport(
            False,
            f"theta row {d} sums to {int(row_sums[d])}, "
            f"document length is {int(corpus.doc_lengths[d])}",
        )

    col_sums = np.zeros(theta.num_topics, dtype=np.int64)
    np.add.at(col_sums, theta.topic_ids.astype(np.int64), theta.counts.astype(np.int64))
    bad = np.flatnonzero(col_sums != phi.topic_totals)
    if bad.size:
        k = int(bad[0])
        return ConservationReport(
            False,
            f"topic {k}: theta column sum {int(col_sums[k])} != "
            f"phi total {int(phi.topic_totals[k])}",
        )

    phi_row_sums = phi.counts.sum(axis=1, dtype=np.int64)
    bad = np.flatnonzero(phi_row_sums != phi.topic_totals)
    if bad.size:
        k = int(bad[0])
        return ConservationReport(
            False,
            f"topic {k}: phi row sum {int(phi_row_sums[k])} != "
            f"stored total {int(phi.topic_totals[k])}",
        )

    total = int(phi.topic_totals.sum())
    if total != corpus.num_tokens:
        return ConservationReport(
            False, f"totals sum to {total}, corpus has {corpus.num_tokens} tokens"
        )
    return ConservationReport(True, "ok")


def save_snapshot(theta, phi, path, metadata=None):
    """Write the model to disk.

    Layout: magic "GFSNAP1"; little-endian u64 K, V, D, NNZ, phi_width;
    phi counts row-major; topic_totals u64; theta row_ptr u64, topic_ids
    u16, counts u16; then a u64-length-prefixed JSON metadata block with
    the training configuration.
    """
    meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(
            struct.pack(
                "<5Q",
                phi.num_topics,
                phi.vocab_size,
                theta.num_rows,
                theta.nnz,
                phi.width,
            )
        )
        fh.write(phi.counts.astype(f"<u{phi.width // 8}").tobytes())
        fh.write(phi.topic_totals.astype("<u8").tobytes())
        fh.write(theta.row_ptr.astype("<u8").tobytes())
        fh.write(theta.topic_ids.astype("<u2").tobytes())
        fh.write(theta.counts.astype("<u2").tobytes())
        fh.write(struct.pack("<Q", len(meta)))
        fh.write(meta)


def load_snapshot(path):
    """Read a snapshot back as (ThetaRows, PhiMatrix, metadata dict)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(SNAPSHOT_MAGIC)] != SNAPSHOT_MAGIC:
        raise CorpusFormatError(f"{path}: bad snapshot magic")
    pos = len(SNAPSHOT_MAGIC)
    num_topics, vocab_size, num_docs, nnz, width = struct.unpack_from("<5Q", blob, pos)
    pos += 40
    if width not in (16, 32):
        raise CorpusFormatError(f"{path}: unsupported phi width {width}")
    cells = num_topics * vocab_size
    counts = np.frombuffer(blob, dtype=f"<u{width // 8}", count=cells, offset=pos)
    pos += cells * (width // 8)
    totals = np.frombuffer(blob, dtype="<u8", count=num_topics, offset=pos)
    pos += 8 * num_topics
    row_ptr = np.frombuffer(blob, dtype="<u8", count=num_docs + 1, offset=pos)
    pos += 8 * (num_docs + 1)
    topic_ids = np.frombuffer(blob, dtype="<u2", count=nnz, offset=pos)
    pos += 2 * nnz
    theta_counts = np.frombuffer(blob, dtype="<u2", count=nnz, offset=pos)
    pos += 2 * nnz
    (meta_len,) = struct.unpack_from("<Q", blob, pos)
    pos += 8
    try:
        metadata = json.loads(blob[pos : pos + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CorpusFormatError(f"{path}: corrupt metadata block") from None
    phi = PhiMatrix(
        counts=counts.reshape(num_topics, vocab_size).astype(phi_dtype(width)),
        topic_totals=totals.astype(np.int64),
    )
    theta = ThetaRows(
        row_ptr=row_ptr.astype(np.int64),
        topic_ids=topic_ids.astype(np.uint16).copy(),
        counts=theta_counts.astype(np.uint16).copy(),
        num_topics=int(num_topics),
    )
    return theta, phi, metadata


def require_compatible(theta, phi, corpus):
    """Raise ShapeMismatchError unless model and corpus dimensions agree."""
    if theta.num_rows != corpus.num_docs:
        raise ShapeMismatchError(
            f"model has {theta.num_rows} documents, corpus has {corpus.num_docs}"
        )
    if phi.vocab_size != corpus.vocab_size:
        raise ShapeMismatchError(
            f"model vocabulary is {phi.vocab_size}, corpus is {corpus.vocab_size}"
        )
    if theta.num_topics != phi.num_topics:
        raise ShapeMismatchError(
            f"theta has {theta.num_topics} topics, phi has {phi.num_topics}"
        )
