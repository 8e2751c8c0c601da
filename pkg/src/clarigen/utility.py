"""Usefulness classifier: three LSTM encoders + feed-forward scorer.

Scores the probability that a (question, answer) pair is a meaningful
addition to a context. The same parameters double as the adversarial
discriminator.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import checkpoint
from .data import Triple, encode_batch
from .errors import ContractError
from .optim import Adam
from .seq2seq import init_matrix

ROLES = ("ctx", "q", "a")


class UtilityParams:
    """Independent context/question/answer encoders plus the scorer MLP."""

    def __init__(self, vocab_size, embed_dim=200, hidden=100, scorer_hidden=100,
                 rng=None, zero_scorer=False):
        rng = rng or np.random.default_rng(0)
        self.vocab_size = vocab_size
        self.embed_dim = embed_dim
        self.hidden = hidden

        emb = init_matrix(rng, (vocab_size, embed_dim))
        emb[0] = 0.0  # PAD row
        self._p = {"emb": ad.parameter(emb)}
        for role in ROLES:
            self._p[f"{role}_wx"] = ad.parameter(init_matrix(rng, (embed_dim, 4 * hidden)))
            self._p[f"{role}_wh"] = ad.parameter(init_matrix(rng, (hidden, 4 * hidden)))
            self._p[f"{role}_b"] = ad.parameter(np.zeros(4 * hidden))
        w1 = init_matrix(rng, (3 * hidden, scorer_hidden))
        w2 = init_matrix(rng, (scorer_hidden, 1))
        if zero_scorer:
            w1 = np.zeros_like(w1)
            w2 = np.zeros_like(w2)
        self._p["scorer_w1"] = ad.parameter(w1)
        self._p["scorer_b1"] = ad.parameter(np.zeros(scorer_hidden))
        self._p["scorer_w2"] = ad.parameter(w2)
        self._p["scorer_b2"] = ad.parameter(np.zeros(1))

    def __getitem__(self, name):
        return self._p[name]

    def params(self):
        return dict(self._p)

    def save(self, path):
        checkpoint.save(path, {k: t.data for k, t in self._p.items()})

    def load(self, path):
        checkpoint.load_into(path, self._p)


def encode_avg(params, role, ids, mask):
    """Mean of top hidden states over unmasked positions: (B, H)."""
    ids = np.asarray(ids)
    mask = np.asarray(mask, dtype=np.float64)
    lengths = mask.sum(axis=1)
    if (lengths == 0).any():
        raise ContractError("encode_avg: empty sequence in batch")
    batch, n_steps = ids.shape
    hid = params.hidden
    h = ad.Tensor(np.zeros((batch, hid)))
    c = ad.Tensor(np.zeros((batch, hid)))
    top = []
    for t in range(n_steps):
        col = mask[:, t]
        mask_col = None if col.all() else col
        x = ad.embedding(params["emb"], ids[:, t])
        h, c = ad.lstm_cell(
            x, h, c,
            params[f"{role}_wx"], params[f"{role}_wh"], params[f"{role}_b"],
            mask_col,
        )
        top.append(h)
    states = ad.stack_time(top)
    weights = ad.Tensor(mask / lengths[:, None])
    return ad.attn_context(states, weights)


def utility_logits(params, batch):
    """Scorer logits for a Batch carrying context/question/answer blocks."""
    cbar = encode_avg(params, "ctx", batch.context, batch.context_mask)
    qbar = encode_avg(params, "q", batch.question, batch.question_mask)
    abar = encode_avg(params, "a", batch.answer, batch.answer_mask)
    feats = ad.concat_cols(ad.concat_cols(cbar, qbar), abar)
    hidden = ad.tanh(ad.add_bias(ad.matmul(feats, params["scorer_w1"]),
                                 params["scorer_b1"]))
    logits = ad.add_bias(ad.matmul(hidden, params["scorer_w2"]),
                         params["scorer_b2"])
    return ad.reshape(logits, (batch.size,))


def utility_score(params, batch):
    """Probabilities in (0, 1), one per triple; inference only."""
    with ad.no_grad():
        logits = utility_logits(params, batch)
    z = logits.data
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ex = np.exp(z[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def score_triples(params, triples, vocab, batch_size=64):
    """Score a list of Triples; returns a float array."""
    out = []
    for start in range(0, len(triples), batch_size):
        batch = encode_batch(triples[start:start + batch_size], vocab)
        out.append(utility_score(params, batch))
    return np.concatenate(out) if out else np.zeros(0)


@dataclass
class LabeledTriple:
    """A triple with a binary usefulness label and its construction origin."""

    triple: Triple
    label: int
    provenance: str  # true-pair | random-pair | model-generated


def make_negatives(triples, rng, ratio=1):
    """Pair each context with a uniformly random other instance's (q, a).

    The question and its paired answer always come from one donor. Yields
    positives and negatives interleaved, ratio negatives per positive.
    """
    n = len(triples)
    if n < 2:
        raise ContractError("make_negatives needs at least two triples")
    labeled = []
    for i, t in enumerate(triples):
        labeled.append(LabeledTriple(t, 1, "true-pair"))
        for _ in range(ratio):
            j = int(rng.integers(n - 1))
            if j >= i:
                j += 1
            donor = triples[j]
            labeled.append(LabeledTriple(
                Triple(t.context, donor.question, donor.answer), 0, "random-pair"
            ))
    return labeled


def bce_loss(params, labeled_batch, vocab):
    """Mean binary cross-entropy over a list of LabeledTriples."""
    batch = encode_batch([lt.triple for lt in labeled_batch], vocab)
    labels = np.array([lt.label for lt in labeled_batch], dtype=np.float64)
    logits = utility_logits(params, batch)
    return ad.scale(ad.tsum(ad.bce_rows(logits, labels)), 1.0 / len(labeled_batch))


def _accuracy(params, labeled, vocab, batch_size=64):
    correct = 0
    for start in range(0, len(labeled), batch_size):
        chunk = labeled[start:start + batch_size]
        batch = encode_batch([lt.triple for lt in chunk], vocab)
        scores = utility_score(params, batch)
        for lt, s in zip(chunk, scores):
            correct += int((s > 0.5) == bool(lt.label))
    return correct / len(labeled) if labeled else 0.0


def pretrain_utility(labeled, params, vocab, epochs, batch_size=32, lr=1e-4,
                     rng=None, log_fn=None):
    """Binary cross-entropy training with a deterministic 90/10 held-out split.

    The split hashes the context string, so a context's positive and its
    negatives land on the same side. Returns per-epoch report dicts.
    """
    labels = {lt.label for lt in labeled}
    if labels != {0, 1}:
        raise ContractError("pretrain_utility needs both positive and negative labels")
    rng = rng or np.random.default_rng(0)
    train, held = [], []
    for lt in labeled:
        digest = hashlib.md5(" ".join(lt.triple.context).encode("utf-8")).digest()
        (held if digest[0] % 10 == 0 else train).append(lt)
    if not train or not held:
        raise ContractError("degenerate held-out split; need more data")

    opt = Adam(params.params(), lr=lr)
    reports = []
    for epoch in range(epochs):
        order = rng.permutation(len(train))
        total = 0.0
        for start in range(0, len(train), batch_size):
            chunk = [train[i] for i in order[start:start + batch_size]]
            loss = bce_loss(params, chunk, vocab)
            ad.backward(loss)
            opt.step()
            total += loss.item() * len(chunk)
        report = {
            "epoch": epoch,
            "mean_loss": total / len(train),
            "heldout_accuracy": _accuracy(params, held, vocab),
        }
        reports.append(report)
        if log_fn:
            log_fn(report)
    return reports
