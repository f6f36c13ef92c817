import numpy as np
import pytest

from gibbsflow import corpus as cp
from gibbsflow import model as md
from gibbsflow.errors import CorpusFormatError, CountOverflowError, ShapeMismatchError


def build_chunk(doc_ids, word_ids, assignments, chunk_id=0):
    """Assemble a word-grouped Chunk straight from token triples."""
    doc_ids = np.asarray(doc_ids, dtype=np.int32)
    word_ids = np.asarray(word_ids, dtype=np.int32)
    assignments = np.asarray(assignments, dtype=np.uint16)
    order = np.argsort(word_ids, kind="stable")
    doc_ids, word_ids, assignments = doc_ids[order], word_ids[order], assignments[order]
    words, starts, sizes = np.unique(word_ids, return_index=True, return_counts=True)
    doc_lo = int(doc_ids.min()) if doc_ids.size else 0
    doc_hi = int(doc_ids.max()) + 1 if doc_ids.size else 0
    dw_ptr, dw_tok = cp._doc_word_map(doc_ids, doc_lo, doc_hi - doc_lo)
    return cp.Chunk(
        chunk_id=chunk_id,
        doc_lo=doc_lo,
        doc_hi=doc_hi,
        token_count=len(doc_ids),
        doc_ids=doc_ids,
        word_ids=word_ids,
        assignments=assignments.copy(),
        group_words=words.astype(np.int32),
        group_offsets=starts.astype(np.int64),
        group_sizes=sizes.astype(np.int64),
        dw_ptr=dw_ptr,
        dw_tok=dw_tok,
    )


def theta_row_oracle(assignments, num_topics):
    """Naive count-then-filter histogram."""
    pairs = [(k, sum(1 for z in assignments if z == k)) for k in range(num_topics)]
    pairs = [(k, c) for k, c in pairs if c > 0]
    return [k for k, _ in pairs], [c for _, c in pairs]


def phi_oracle(word_ids, assignments, num_topics, vocab_size):
    """Triple-loop count."""
    grid = np.zeros((num_topics, vocab_size), dtype=np.int64)
    for w, z in zip(word_ids, assignments):
        grid[z, w] += 1
    return grid


class TestRebuildThetaRow:
    def test_direct_histogram(self):
        chunk = build_chunk([0, 0, 0], [1, 2, 0], [2, 2, 0])
        ids, counts = md.rebuild_theta_row(chunk, 0, 4)
        assert ids.tolist() == [0, 2]
        assert counts.tolist() == [1, 2]

    def test_singleton(self):
        chunk = build_chunk([0], [3], [7])
        ids, counts = md.rebuild_theta_row(chunk, 0, 8)
        assert ids.tolist() == [7]
        assert counts.tolist() == [1]

    def test_matches_count_then_filter_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(1000):
            n = int(rng.integers(1, 60))
            num_topics = int(rng.integers(1, 12))
            zs = rng.integers(0, num_topics, n)
            chunk = build_chunk(np.zeros(n), rng.integers(0, 5, n), zs)
            ids, counts = md.rebuild_theta_row(chunk, 0, num_topics)
            oracle_ids, oracle_counts = theta_row_oracle(zs.tolist(), num_topics)
            assert ids.tolist() == oracle_ids
            assert counts.tolist() == oracle_counts
            assert int(counts.sum()) == n

    def test_overflow_names_document(self):
        n = 70000
        chunk = build_chunk(np.zeros(n), np.zeros(n), np.zeros(n))
        with pytest.raises(CountOverflowError, match="document 0"):
            md.rebuild_theta_row(chunk, 0, 2)


class TestRebuildPhiReplica:
    def test_direct_count(self):
        chunk = build_chunk([0, 0, 0], [1, 1, 2], [0, 0, 1])
        rep = md.rebuild_phi_replica(chunk, 2, 3)
        assert rep.counts[0, 1] == 2
        assert rep.counts[1, 2] == 1
        assert rep.counts.sum() == 3
        assert rep.topic_totals.tolist() == [2, 1]

    def test_empty_chunk_gives_zero_replica(self):
        chunk = build_chunk([], [], [])
        rep = md.rebuild_phi_replica(chunk, 3, 4)
        assert rep.counts.sum() == 0
        assert rep.topic_totals.tolist() == [0, 0, 0]

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            n = int(rng.integers(1, 120))
            num_topics = int(rng.integers(1, 9))
            vocab_size = int(rng.integers(1, 11))
            ws = rng.integers(0, vocab_size, n)
            zs = rng.integers(0, num_topics, n)
            chunk = build_chunk(rng.integers(0, 4, n), ws, zs)
            rep = md.rebuild_phi_replica(chunk, num_topics, vocab_size)
            assert (rep.counts == phi_oracle(ws, zs, num_topics, vocab_size)).all()
            assert (rep.topic_totals == rep.counts.sum(axis=1)).all()

    def test_16bit_overflow_names_cell(self):
        n = 66000
        chunk = build_chunk(np.zeros(n), np.ones(n), np.ones(n, dtype=int))
        with pytest.raises(CountOverflowError, match=r"topic 1, word 1"):
            md.rebuild_phi_replica(chunk, 2, 2, width=16)
        rep = md.rebuild_phi_replica(chunk, 2, 2, width=32)
        assert rep.counts[1, 1] == n


class TestRebuildIdempotence:
    def test_rebuild_twice_identical(self):
        rng = np.random.default_rng(31)
        chunk = build_chunk(
            rng.integers(0, 6, 200), rng.integers(0, 9, 200), rng.integers(0, 5, 200)
        )
        t1 = md.rebuild_theta(chunk, 5)
        t2 = md.rebuild_theta(chunk, 5)
        for field in ("row_ptr", "topic_ids", "counts"):
            assert (getattr(t1, field) == getattr(t2, field)).all()
        p1 = md.rebuild_phi_replica(chunk, 5, 9)
        p2 = md.rebuild_phi_replica(chunk, 5, 9)
        assert (p1.counts == p2.counts).all()


def make_model(doc_lengths, vocab_size, num_topics, seed):
    rng = np.random.default_rng(seed)
    doc_ids = np.repeat(np.arange(len(doc_lengths)), doc_lengths)
    word_ids = rng.integers(0, vocab_size, doc_ids.size)
    corpus = cp.corpus_from_tokens(doc_ids, word_ids, vocab_size)
    chunks = cp.partition(corpus, min(3, corpus.num_docs), num_topics, seed)
    theta = md.concat_theta([md.rebuild_theta(ch, num_topics) for ch in chunks])
    replicas = [md.rebuild_phi_replica(ch, num_topics, vocab_size) for ch in chunks]
    phi = md.zero_phi(num_topics, vocab_size)
    for rep in replicas:
        phi.counts += rep.counts
        phi.topic_totals += rep.topic_totals
    return corpus, chunks, theta, phi, replicas


class TestReplicaSumIdentity:
    def test_sum_of_replicas_equals_global_recount(self):
        _, chunks, _, phi, _ = make_model([9, 4, 12, 7, 5], 6, 4, seed=3)
        # counts are order-free, so recounting the pooled tokens must equal
        # the elementwise replica sum
        merged_words = np.concatenate([ch.word_ids for ch in chunks])
        merged_z = np.concatenate([ch.assignments for ch in chunks])
        assert (phi.counts == phi_oracle(merged_words, merged_z, 4, 6)).all()


class TestCheckConservation:
    def test_fresh_model_passes(self):
        corpus, _, theta, phi, _ = make_model([5, 8, 3, 9], 7, 3, seed=1)
        report = md.check_conservation(theta, phi, corpus)
        assert report.ok, report.detail

    def test_injected_phi_fault_names_topic(self):
        corpus, _, theta, phi, _ = make_model([5, 8, 3, 9], 7, 3, seed=2)
        phi.counts[1, 0] += 1
        phi.topic_totals[1] += 1
        report = md.check_conservation(theta, phi, corpus)
        assert not report.ok
        assert "topic 1" in report.detail

    def test_stale_totals_detected(self):
        corpus, _, theta, phi, _ = make_model([5, 8, 3], 7, 3, seed=4)
        phi.counts[2, 1] += 1  # counts and totals now disagree
        report = md.check_conservation(theta, phi, corpus)
        assert not report.ok
        assert "topic 2" in report.detail

    def test_theta_row_fault_names_document(self):
        corpus, _, theta, phi, _ = make_model([5, 8, 3], 7, 3, seed=5)
        theta.counts[theta.row_ptr[1]] += 1
        report = md.check_conservation(theta, phi, corpus)
        assert not report.ok
        assert "row 1" in report.detail


class TestSnapshot:
    def test_roundtrip(self, tmp_path):
        corpus, _, theta, phi, _ = make_model([6, 11, 4, 8], 9, 5, seed=6)
        path = tmp_path / "model.gfs"
        md.save_snapshot(theta, phi, path, {"seed": 42, "topics": 5})
        t2, p2, meta = md.load_snapshot(path)
        assert meta == {"seed": 42, "topics": 5}
        assert (t2.row_ptr == theta.row_ptr).all()
        assert (t2.topic_ids == theta.topic_ids).all()
        assert (t2.counts == theta.counts).all()
        assert (p2.counts == phi.counts).all()
        assert (p2.topic_totals == phi.topic_totals).all()
        assert p2.width == 32
        assert md.check_conservation(t2, p2, corpus).ok

    def test_16bit_roundtrip(self, tmp_path):
        chunk = build_chunk([0, 0, 1], [0, 1, 1], [0, 1, 1])
        theta = md.rebuild_theta(chunk, 2)
        phi = md.rebuild_phi_replica(chunk, 2, 2, width=16)
        path = tmp_path / "m16.gfs"
        md.save_snapshot(theta, phi, path)
        _, p2, _ = md.load_snapshot(path)
        assert p2.width == 16
        assert (p2.counts == phi.counts).all()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.gfs"
        path.write_bytes(b"XXSNAP!!" + b"\0" * 100)
        with pytest.raises(CorpusFormatError, match="magic"):
            md.load_snapshot(path)

    def test_compatibility_guard(self):
        corpus, _, theta, phi, _ = make_model([5, 5], 4, 3, seed=7)
        other = md.zero_phi(3, 9)
        with pytest.raises(ShapeMismatchError, match="vocabulary"):
            md.require_compatible(theta, other, corpus)
