"""Corpus handling: preprocessing, vocabulary, embeddings, batching.

Triples are (context, question, answer) token sequences. The on-disk format
is JSONL with string fields "context", "question", "answer"; preprocessing
(lowercase + punctuation isolation) happens at load time.
"""

import json
import hashlib
import string
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ParseError

PAD, UNK, SOS, EOS = 0, 1, 2, 3
SPECIAL_TOKENS = ["<pad>", "<unk>", "<s>", "</s>"]

MAX_CONTEXT_LEN = 100
MAX_QUESTION_LEN = 20
MAX_ANSWER_LEN = 20

_PUNCT = set(string.punctuation)


def preprocess(raw_text):
    """Lowercase and tokenize: punctuation chars become their own tokens."""
    chars = []
    for ch in raw_text.lower():
        if ch in _PUNCT:
            chars.append(f" {ch} ")
        else:
            chars.append(ch)
    return "".join(chars).split()


@dataclass
class Triple:
    """One training instance, already tokenized and truncated."""

    context: list
    question: list
    answer: list


def make_triple(context_text, question_text, answer_text):
    """Preprocess and truncate raw strings into a Triple.

    Raises ContractError if question or answer is empty after preprocessing.
    """
    q = preprocess(question_text)[:MAX_QUESTION_LEN]
    a = preprocess(answer_text)[:MAX_ANSWER_LEN]
    if not q or not a:
        raise ContractError("question and answer must be non-empty after preprocessing")
    return Triple(preprocess(context_text)[:MAX_CONTEXT_LEN], q, a)


def load_triples(path):
    """Read triples.jsonl. Malformed rows raise ParseError with the line number."""
    triples = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                triples.append(
                    make_triple(obj["context"], obj["question"], obj["answer"])
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"bad triple record ({exc})", line=lineno) from exc
            except ContractError as exc:
                raise ParseError(str(exc), line=lineno) from exc
    return triples


def save_triples(path, triples):
    with open(path, "w", encoding="utf-8") as f:
        for t in triples:
            f.write(json.dumps({
                "context": " ".join(t.context),
                "question": " ".join(t.question),
                "answer": " ".join(t.answer),
            }) + "\n")


def holdout_split(triples, held_fraction=0.1):
    """Deterministic split keyed on a hash of the context string."""
    buckets = max(2, round(1.0 / held_fraction))
    train, held = [], []
    for t in triples:
        digest = hashlib.md5(" ".join(t.context).encode("utf-8")).digest()
        (held if digest[0] % buckets == 0 else train).append(t)
    return train, held


class Vocabulary:
    """Token ids with PAD/UNK/SOS/EOS at 0..3 and a frequency cutoff."""

    def __init__(self, tokens, cutoff=10):
        self.cutoff = cutoff
        self.id_to_token = list(SPECIAL_TOKENS) + list(tokens)
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ContractError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.id_to_token)

    def id(self, token):
        return self.token_to_id.get(token, UNK)

    def token(self, idx):
        return self.id_to_token[idx]

    def decode(self, ids, strip_specials=True):
        """Ids back to tokens; stripping drops PAD/SOS/EOS but keeps <unk>."""
        toks = [self.id_to_token[i] for i in ids]
        if strip_specials:
            drop = {SPECIAL_TOKENS[PAD], SPECIAL_TOKENS[SOS], SPECIAL_TOKENS[EOS]}
            toks = [t for t in toks if t not in drop]
        return toks

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for tok in self.id_to_token:
                f.write(tok + "\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            toks = [line.rstrip("\n") for line in f]
        if toks[:4] != SPECIAL_TOKENS:
            raise ParseError(f"{path}: first four lines must be the special tokens")
        vocab = cls.__new__(cls)
        vocab.cutoff = None
        vocab.id_to_token = toks
        vocab.token_to_id = {tok: i for i, tok in enumerate(toks)}
        return vocab


def build_vocab(triples, cutoff=10):
    """Count over contexts+questions+answers; keep tokens with freq >= cutoff.

    Order after the specials: frequency descending, then lexicographic.
    """
    if not triples:
        raise ContractError("build_vocab needs at least one triple")
    counts = Counter()
    for t in triples:
        counts.update(t.context)
        counts.update(t.question)
        counts.update(t.answer)
    kept = [tok for tok, c in counts.items()
            if c >= cutoff and tok not in SPECIAL_TOKENS]
    kept.sort(key=lambda tok: (-counts[tok], tok))
    return Vocabulary(kept, cutoff=cutoff)


def encode(tokens, vocab, max_len, append_eos=False):
    """Map tokens to ids, truncate to max_len, optionally terminate with EOS.

    When append_eos is set one slot is reserved so the result never exceeds
    max_len.
    """
    if max_len < 1:
        raise ContractError(f"max_len must be >= 1, got {max_len}")
    budget = max_len - 1 if append_eos else max_len
    ids = [vocab.id(tok) for tok in tokens[:budget]]
    if append_eos:
        ids.append(EOS)
    return ids


@dataclass
class EmbeddingTable:
    """|V| x d matrix of input embeddings."""

    matrix: np.ndarray
    trainable: bool = True


def load_embeddings(path, vocab, dim=200, rng=None):
    """Load "token v1 .. vd" rows; unseen vocab tokens get uniform(-0.1, 0.1).

    The PAD row is zeroed. Wrong dimensionality or an unparseable value is a
    ParseError naming the line.
    """
    rng = rng or np.random.default_rng(0)
    matrix = rng.uniform(-0.1, 0.1, size=(len(vocab), dim))
    matrix[PAD] = 0.0
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise ParseError(
                    f"expected token + {dim} values, got {len(parts)} fields",
                    line=lineno,
                )
            tok = parts[0]
            if tok not in vocab.token_to_id:
                continue
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"bad float ({exc})", line=lineno) from exc
            matrix[vocab.token_to_id[tok]] = vec
    matrix[PAD] = 0.0
    return EmbeddingTable(matrix=matrix, trainable=True)


@dataclass
class Batch:
    """Padded id matrices with true lengths and float masks."""

    context: np.ndarray
    context_len: np.ndarray
    context_mask: np.ndarray
    question: np.ndarray
    question_len: np.ndarray
    question_mask: np.ndarray
    answer: np.ndarray = field(default=None)
    answer_len: np.ndarray = field(default=None)
    answer_mask: np.ndarray = field(default=None)

    @property
    def size(self):
        return self.context.shape[0]


def _pad_block(rows):
    n = len(rows)
    width = max(1, max(len(r) for r in rows))
    ids = np.full((n, width), PAD, dtype=np.int64)
    mask = np.zeros((n, width), dtype=np.float64)
    lens = np.zeros(n, dtype=np.int64)
    for i, r in enumerate(rows):
        ids[i, :len(r)] = r
        mask[i, :len(r)] = 1.0
        lens[i] = len(r)
    return ids, lens, mask


def encode_batch(triples, vocab, max_context=MAX_CONTEXT_LEN,
                 max_question=MAX_QUESTION_LEN, max_answer=MAX_ANSWER_LEN):
    """Encode a list of triples into one padded Batch."""
    ctx_rows = []
    for t in triples:
        row = encode(t.context, vocab, max_context)
        ctx_rows.append(row if row else [UNK])  # keep at least one position
    q_rows = [encode(t.question, vocab, max_question, append_eos=True) for t in triples]
    a_rows = [encode(t.answer, vocab, max_answer, append_eos=True) for t in triples]
    ctx = _pad_block(ctx_rows)
    q = _pad_block(q_rows)
    a = _pad_block(a_rows)
    return Batch(*ctx, *q, *a)


def make_batches(triples, vocab, batch_size, rng=None, shuffle=True,
                 max_context=MAX_CONTEXT_LEN, max_question=MAX_QUESTION_LEN,
                 max_answer=MAX_ANSWER_LEN):
    """Yield epoch-shuffled padded batches; each batch pads to its own max."""
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    order = np.arange(len(triples))
    if shuffle:
        if rng is None:
            raise ContractError("shuffling requires a seeded rng")
        order = rng.permutation(len(triples))
    for start in range(0, len(triples), batch_size):
        chunk = [triples[i] for i in order[start:start + batch_size]]
        yield encode_batch(chunk, vocab, max_context, max_question, max_answer)
