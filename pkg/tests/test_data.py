import json

import numpy as np
import pytest

from clarigen import data
from clarigen.data import (
    EOS, PAD, SOS, UNK, Triple, Vocabulary, build_vocab, encode, encode_batch,
    load_embeddings, make_batches, preprocess,
)
from clarigen.errors import ContractError, ParseError
from clarigen import synthetic
from clarigen.synthetic import SLOT_NAMES, generate_synthetic, omitted_slot_of


def test_preprocess_punctuation_isolation():
    assert preprocess("Is it waterproof?") == ["is", "it", "waterproof", "?"]
    assert preprocess("ABC") == ["abc"]
    assert preprocess('70" wide') == ["70", '"', "wide"]
    assert preprocess("") == []
    assert preprocess("don't stop") == ["don", "'", "t", "stop"]


def _toy_triples(spec):
    # spec: list of (token, count); each triple repeats the token everywhere
    triples = []
    for tok, count in spec:
        for _ in range(count):
            triples.append(Triple([tok], [tok], [tok]))
    return triples


def test_build_vocab_cutoff_boundary():
    # "mop" at frequency 9 (3 fields x 3 triples) with cutoff 10 is excluded
    triples = _toy_triples([("mop", 3)])
    vocab = build_vocab(triples, cutoff=10)
    assert "mop" not in vocab.token_to_id
    assert encode(["mop"], vocab, 5) == [UNK]


def test_build_vocab_cutoff_one_keeps_everything():
    triples = _toy_triples([("a", 2), ("b", 1)])
    vocab = build_vocab(triples, cutoff=1)
    assert {"a", "b"} <= set(vocab.token_to_id)


def test_build_vocab_order_and_counts():
    # a: 12, b: 10, c: 9 occurrences with cutoff 10 -> specials + [a, b]
    triples = _toy_triples([("a", 4), ("b", 10), ("c", 3)])
    # a appears 12 times (4 triples x 3 fields); b 30; c 9
    vocab = build_vocab(triples, cutoff=10)
    assert vocab.id_to_token[:4] == data.SPECIAL_TOKENS
    assert vocab.id_to_token[4:] == ["b", "a"]  # frequency descending
    assert len(vocab) == 6


def test_build_vocab_empty_stream():
    with pytest.raises(ContractError):
        build_vocab([], cutoff=1)


def test_vocab_save_load_stable(tmp_path):
    vocab = build_vocab(_toy_triples([("a", 5), ("b", 4)]), cutoff=1)
    p1 = tmp_path / "vocab.txt"
    vocab.save(p1)
    reloaded = Vocabulary.load(p1)
    assert reloaded.id_to_token == vocab.id_to_token
    p2 = tmp_path / "vocab2.txt"
    reloaded.save(p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_encode_rules():
    vocab = build_vocab(_toy_triples([("a", 5), ("b", 5)]), cutoff=1)
    assert encode([], vocab, 5, append_eos=True) == [EOS]
    long_q = ["a"] * 25
    out = encode(long_q, vocab, 20, append_eos=True)
    assert len(out) == 20 and out[-1] == EOS and out[:-1] == [vocab.id("a")] * 19
    out = encode(["a", "zzz", "b"], vocab, 10)
    assert out == [vocab.id("a"), UNK, vocab.id("b")]
    with pytest.raises(ContractError):
        encode(["a"], vocab, 0)


def test_encode_decode_identity_up_to_truncation():
    vocab = build_vocab(_toy_triples([("x", 4), ("y", 4)]), cutoff=1)
    tokens = ["x", "y", "x"]
    ids = encode(tokens, vocab, 10, append_eos=True)
    assert vocab.decode(ids) == tokens


def test_load_embeddings(tmp_path):
    vocab = build_vocab(_toy_triples([("a", 5), ("b", 5)]), cutoff=1)
    path = tmp_path / "emb.txt"
    path.write_text("a " + " ".join(["1.5"] * 4) + "\n")
    table = load_embeddings(path, vocab, dim=4, rng=np.random.default_rng(0))
    assert table.matrix.shape == (len(vocab), 4)
    assert np.array_equal(table.matrix[vocab.id("a")], [1.5] * 4)
    assert np.array_equal(table.matrix[PAD], np.zeros(4))
    assert (np.abs(table.matrix[vocab.id("b")]) <= 0.1).all()

    # no coverage: everything random except PAD
    empty = tmp_path / "none.txt"
    empty.write_text("zzz " + " ".join(["0.0"] * 4) + "\n")
    table = load_embeddings(empty, vocab, dim=4, rng=np.random.default_rng(0))
    assert np.array_equal(table.matrix[PAD], np.zeros(4))

    # wrong dimensionality is a parse error with the line number
    bad = tmp_path / "bad.txt"
    bad.write_text("a 1.0 2.0\n")
    with pytest.raises(ParseError) as err:
        load_embeddings(bad, vocab, dim=4)
    assert "line 1" in str(err.value)


def test_make_batches_sizes_and_determinism():
    vocab = build_vocab(_toy_triples([("a", 10)]), cutoff=1)
    triples = _toy_triples([("a", 10)])
    sizes = [b.size for b in make_batches(triples, vocab, 4, np.random.default_rng(0))]
    assert sizes == [4, 4, 2]
    first = [b.context.tolist() for b in
             make_batches(triples, vocab, 4, np.random.default_rng(42))]
    second = [b.context.tolist() for b in
              make_batches(triples, vocab, 4, np.random.default_rng(42))]
    assert first == second
    with pytest.raises(ContractError):
        list(make_batches(triples, vocab, 0, np.random.default_rng(0)))


def test_batch_masks_cover_no_padding():
    rng = np.random.default_rng(11)
    triples = generate_synthetic(40, rng)
    vocab = build_vocab(triples, cutoff=1)
    for batch in make_batches(triples, vocab, 16, np.random.default_rng(0)):
        for ids, mask, lens in (
            (batch.context, batch.context_mask, batch.context_len),
            (batch.question, batch.question_mask, batch.question_len),
            (batch.answer, batch.answer_mask, batch.answer_len),
        ):
            assert ((ids == PAD) == (mask == 0)).all() or (ids[mask == 0] == PAD).all()
            assert (mask.sum(axis=1) == lens).all()
            assert ids.max() < len(vocab) and ids.min() >= 0
        # question and answer rows end with EOS at their true final position
        for i in range(batch.size):
            assert batch.question[i, batch.question_len[i] - 1] == EOS
            assert batch.answer[i, batch.answer_len[i] - 1] == EOS


def test_triples_jsonl_roundtrip(tmp_path):
    triples = generate_synthetic(5, np.random.default_rng(0))
    path = tmp_path / "triples.jsonl"
    data.save_triples(path, triples)
    loaded = data.load_triples(path)
    assert [t.context for t in loaded] == [t.context for t in triples]
    assert [t.question for t in loaded] == [t.question for t in triples]

    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"context": "c", "question": "", "answer": "a"}\n')
    with pytest.raises(ParseError) as err:
        data.load_triples(bad)
    assert "line 1" in str(err.value)


def test_synthetic_omitted_slot_in_question():
    triples = generate_synthetic(50, np.random.default_rng(0))
    for t in triples:
        omitted = omitted_slot_of(t)
        assert omitted is not None
        assert omitted in t.question
        # exactly one slot name is missing from the context
        present = [s for s in SLOT_NAMES if s in t.context]
        assert len(present) == len(SLOT_NAMES) - 1


def test_synthetic_answer_value_hidden_from_context():
    triples = generate_synthetic(100, np.random.default_rng(1))
    slot_values = {name: set(vals) for name, vals in synthetic.SLOTS}
    for t in triples:
        omitted = omitted_slot_of(t)
        value = [tok for tok in t.answer if tok in slot_values[omitted]]
        assert len(value) == 1
        assert value[0] not in t.context


def test_synthetic_deterministic():
    a = generate_synthetic(20, np.random.default_rng(123))
    b = generate_synthetic(20, np.random.default_rng(123))
    assert [t.question for t in a] == [t.question for t in b]
    assert [t.context for t in a] == [t.context for t in b]


def test_synthetic_negative_slot_mismatch_rate():
    # donors drawn from a 100-instance pool; mismatch rate over 10^4 draws
    # should be at least (k-1)/k (balanced omission makes the margin strict)
    k = len(SLOT_NAMES)
    rng = np.random.default_rng(7)
    triples = generate_synthetic(100, rng)
    own = [omitted_slot_of(t) for t in triples]
    draws = 10_000
    mismatches = 0
    for _ in range(draws):
        i = int(rng.integers(len(triples)))
        j = int(rng.integers(len(triples) - 1))
        if j >= i:
            j += 1
        mismatches += own[i] != own[j]
    assert mismatches / draws >= (k - 1) / k


def test_holdout_split_deterministic():
    triples = generate_synthetic(200, np.random.default_rng(5))
    t1, h1 = data.holdout_split(triples)
    t2, h2 = data.holdout_split(triples)
    assert len(t1) == len(t2) and len(h1) == len(h2)
    assert 0 < len(h1) < len(triples)
    assert [t.context for t in h1] == [t.context for t in h2]
