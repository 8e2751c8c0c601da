"""Attention-based encoder-decoder over the autodiff core.

One architecture serves both the question generator p(q|c) and the answer
generator p(a|c,q); the answer generator differs only in input assembly
(context ++ separator ++ question, with EOS as the separator).
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import checkpoint
from .data import EOS, PAD, SOS
from .errors import ContractError


def init_matrix(rng, shape):
    return rng.uniform(-0.1, 0.1, size=shape)


class Seq2SeqParams:
    """All weights of one encoder-decoder-attention model."""

    def __init__(self, vocab_size, embed_dim=200, hidden=100, layers=2,
                 rng=None, embedding=None, train_embeddings=True):
        rng = rng or np.random.default_rng(0)
        self.vocab_size = vocab_size
        self.embed_dim = embed_dim
        self.hidden = hidden
        self.layers = layers
        self.train_embeddings = train_embeddings

        if embedding is not None:
            emb = np.array(embedding.matrix, dtype=np.float64)
            if emb.shape != (vocab_size, embed_dim):
                raise ContractError(
                    f"embedding table {emb.shape} does not match "
                    f"({vocab_size}, {embed_dim})"
                )
            self.train_embeddings = embedding.trainable
        else:
            emb = init_matrix(rng, (vocab_size, embed_dim))
            emb[PAD] = 0.0

        self._p = {"emb": ad.parameter(emb)}
        for side in ("enc", "dec"):
            for layer in range(layers):
                in_dim = embed_dim if layer == 0 else hidden
                self._p[f"{side}{layer}_wx"] = ad.parameter(init_matrix(rng, (in_dim, 4 * hidden)))
                self._p[f"{side}{layer}_wh"] = ad.parameter(init_matrix(rng, (hidden, 4 * hidden)))
                self._p[f"{side}{layer}_b"] = ad.parameter(np.zeros(4 * hidden))
        self._p["w_a"] = ad.parameter(init_matrix(rng, (hidden, hidden)))
        self._p["w_c"] = ad.parameter(init_matrix(rng, (2 * hidden, hidden)))
        self._p["w_s"] = ad.parameter(init_matrix(rng, (hidden, vocab_size)))

    def __getitem__(self, name):
        return self._p[name]

    def params(self):
        return dict(self._p)

    def trainable_params(self):
        out = dict(self._p)
        if not self.train_embeddings:
            out.pop("emb")
        return out

    def save(self, path):
        checkpoint.save(path, {k: t.data for k, t in self._p.items()})

    def load(self, path):
        checkpoint.load_into(path, self._p)

    def copy_from(self, other):
        for k, t in self._p.items():
            t.data[...] = other._p[k].data


@dataclass
class EncoderOutput:
    """Per-position top-layer states plus decoder initialization."""

    states: ad.Tensor          # (B, N, H)
    mask: np.ndarray           # (B, N) float 0/1
    final: list                # [(h, c)] per layer, each (B, H)

    def detached(self):
        return EncoderOutput(
            states=self.states.detach(),
            mask=self.mask,
            final=[(h.detach(), c.detach()) for h, c in self.final],
        )


@dataclass
class Hypothesis:
    """One beam-search candidate."""

    ids: list
    logp: float
    state: object
    finished: bool = False


def encode(params, ctx_ids, ctx_mask, train=False, drop_rate=0.0, rng=None):
    """Run the stacked encoder; padded rows freeze their state."""
    ctx_ids = np.asarray(ctx_ids)
    batch, n_steps = ctx_ids.shape
    hid = params.hidden
    state = [
        (ad.Tensor(np.zeros((batch, hid))), ad.Tensor(np.zeros((batch, hid))))
        for _ in range(params.layers)
    ]
    top = []
    for t in range(n_steps):
        col = ctx_mask[:, t]
        mask_col = None if col.all() else col
        x = ad.embedding(params["emb"], ctx_ids[:, t])
        for layer in range(params.layers):
            if layer > 0:
                x = ad.dropout(x, drop_rate, train, rng)
            h, c = ad.lstm_cell(
                x, state[layer][0], state[layer][1],
                params[f"enc{layer}_wx"], params[f"enc{layer}_wh"],
                params[f"enc{layer}_b"], mask_col,
            )
            state[layer] = (h, c)
            x = h
        top.append(x)
    return EncoderOutput(states=ad.stack_time(top), mask=ctx_mask, final=state)


def attend(params, h_t, enc):
    """Bilinear global attention: returns (context vector, weights).

    Weights are nonnegative, sum to 1 over unmasked source positions, and
    are exactly 0 on padding; the context is their convex combination of
    the encoder states.
    """
    query = ad.matmul(h_t, params["w_a"])
    scores = ad.attn_scores(enc.states, query)
    weights = ad.masked_softmax_rows(scores, enc.mask)
    context = ad.attn_context(enc.states, weights)
    return context, weights


def decode_step(params, enc, prev_ids, state, train=False, drop_rate=0.0, rng=None):
    """One decoder step: returns (logits, new_state, attentional hidden)."""
    x = ad.embedding(params["emb"], np.asarray(prev_ids))
    new_state = []
    for layer in range(params.layers):
        if layer > 0:
            x = ad.dropout(x, drop_rate, train, rng)
        h, c = ad.lstm_cell(
            x, state[layer][0], state[layer][1],
            params[f"dec{layer}_wx"], params[f"dec{layer}_wh"],
            params[f"dec{layer}_b"],
        )
        new_state.append((h, c))
        x = h
    h_t = x
    context, _ = attend(params, h_t, enc)
    h_tilde = ad.tanh(ad.matmul(ad.concat_cols(context, h_t), params["w_c"]))
    logits = ad.matmul(h_tilde, params["w_s"])
    return logits, new_state, h_tilde


def _teacher_forced_rows(params, enc, tgt_ids, tgt_mask, upto, train, drop_rate, rng):
    """Accumulated per-row NLL over teacher-forced steps t < upto.

    Returns (rows tensor or None, final state, final prev tokens).
    """
    state = list(enc.final)
    rows = None
    prev = np.full(tgt_ids.shape[0], SOS, dtype=np.int64)
    for t in range(upto):
        logits, state, _ = decode_step(params, enc, prev, state, train, drop_rate, rng)
        ce = ad.cross_entropy_rows(logits, tgt_ids[:, t], tgt_mask[:, t])
        rows = ce if rows is None else ad.add(rows, ce)
        prev = tgt_ids[:, t]
    return rows, state, prev


def mle_loss(params, src_ids, src_mask, tgt_ids, tgt_mask,
             train=True, drop_rate=0.0, rng=None):
    """Summed teacher-forced NLL over unmasked target positions.

    Returns (loss tensor, stats dict with token counts/accuracy).
    """
    enc = encode(params, src_ids, src_mask, train, drop_rate, rng)
    n_steps = tgt_ids.shape[1]
    state = list(enc.final)
    rows = None
    prev = np.full(tgt_ids.shape[0], SOS, dtype=np.int64)
    correct = 0
    for t in range(n_steps):
        logits, state, _ = decode_step(params, enc, prev, state, train, drop_rate, rng)
        ce = ad.cross_entropy_rows(logits, tgt_ids[:, t], tgt_mask[:, t])
        rows = ce if rows is None else ad.add(rows, ce)
        pred = logits.data.argmax(axis=1)
        correct += int(((pred == tgt_ids[:, t]) * (tgt_mask[:, t] > 0)).sum())
        prev = tgt_ids[:, t]
    loss = ad.tsum(rows)
    n_tokens = int(tgt_mask.sum())
    stats = {
        "tokens": n_tokens,
        "correct": correct,
        "accuracy": correct / n_tokens if n_tokens else 0.0,
    }
    return loss, stats


def answer_inputs(ctx_rows, q_rows):
    """Assemble [context ++ EOS ++ question] id rows for the answer generator.

    A terminal EOS on the question row is dropped first; the separator EOS
    marks the boundary. Returns (ids, mask) padded arrays.
    """
    rows = []
    for ctx, q in zip(ctx_rows, q_rows):
        q = list(q)
        if q and q[-1] == EOS:
            q = q[:-1]
        rows.append(list(ctx) + [EOS] + q)
    width = max(len(r) for r in rows)
    ids = np.full((len(rows), width), PAD, dtype=np.int64)
    mask = np.zeros((len(rows), width), dtype=np.float64)
    for i, r in enumerate(rows):
        ids[i, :len(r)] = r
        mask[i, :len(r)] = 1.0
    return ids, mask


def rows_from_batch(ids, lens):
    return [list(ids[i, :lens[i]]) for i in range(ids.shape[0])]


def _log_softmax(v):
    mx = v.max(axis=-1, keepdims=True)
    z = v - mx
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _decode_ban(vocab_size):
    """Additive logit mask: decoders never emit PAD or SOS (UNK is allowed)."""
    ban = np.zeros(vocab_size)
    ban[PAD] = -np.inf
    ban[SOS] = -np.inf
    return ban


def greedy_decode(params, ctx_ids, ctx_mask, max_len=20):
    """Batched greedy decoding; argmax ties break toward the lowest id.

    Returns one id list per row, including the terminal EOS when emitted.
    """
    with ad.no_grad():
        enc = encode(params, ctx_ids, ctx_mask)
        state = list(enc.final)
        batch = ctx_ids.shape[0]
        ban = _decode_ban(params.vocab_size)
        outs = [[] for _ in range(batch)]
        alive = np.ones(batch, dtype=bool)
        prev = np.full(batch, SOS, dtype=np.int64)
        for _ in range(max_len):
            logits, state, _ = decode_step(params, enc, prev, state)
            nxt = (logits.data + ban).argmax(axis=1)
            for i in range(batch):
                if alive[i]:
                    outs[i].append(int(nxt[i]))
            alive &= nxt != EOS
            if not alive.any():
                break
            prev = np.where(alive, nxt, EOS)
    return outs


def sample_decode(params, ctx_ids, ctx_mask, rng, max_len=20):
    """Ancestral sampling; returns (id rows, per-step log-prob rows)."""
    with ad.no_grad():
        enc = encode(params, ctx_ids, ctx_mask)
        state = list(enc.final)
        batch = ctx_ids.shape[0]
        ban = _decode_ban(params.vocab_size)
        outs = [[] for _ in range(batch)]
        logps = [[] for _ in range(batch)]
        alive = np.ones(batch, dtype=bool)
        prev = np.full(batch, SOS, dtype=np.int64)
        for _ in range(max_len):
            logits, state, _ = decode_step(params, enc, prev, state)
            lp = _log_softmax(logits.data + ban)
            p = np.exp(lp)
            cdf = np.cumsum(p, axis=1)
            u = rng.random(batch)
            nxt = (cdf <= u[:, None]).sum(axis=1).clip(0, p.shape[1] - 1)
            for i in range(batch):
                if alive[i]:
                    outs[i].append(int(nxt[i]))
                    logps[i].append(float(lp[i, nxt[i]]))
            alive &= nxt != EOS
            if not alive.any():
                break
            prev = np.where(alive, nxt, EOS)
    return outs, logps


def beam_search_core(step_fn, init_states, beam, max_len, sos=SOS, eos=EOS):
    """Length-unnormalized beam search over an abstract batched step function.

    step_fn(prev_tokens, states) -> (log-probs (K, V), new states list).
    Candidates are ordered by (logp desc, hypothesis index, token id), so
    beam=1 reproduces greedy decoding exactly, ties included. Finished
    hypotheses compete in the final ranking by total log-probability.
    """
    if beam < 1:
        raise ContractError(f"beam must be >= 1, got {beam}")
    live = [Hypothesis(ids=[], logp=0.0, state=init_states)]
    finished = []
    for _ in range(max_len):
        prev = np.array([h.ids[-1] if h.ids else sos for h in live], dtype=np.int64)
        logprobs, states = step_fn(prev, [h.state for h in live])
        vocab = logprobs.shape[1]
        tok_order = np.arange(vocab)
        cands = []
        for hi, hyp in enumerate(live):
            # per-hyp top beam by (logp desc, token id asc) is enough: the
            # global top beam holds at most beam entries from one hypothesis
            row = logprobs[hi]
            top = np.lexsort((tok_order, -row))[:beam]
            for tok in top:
                cands.append((hyp.logp + row[tok], hi, int(tok)))
        cands.sort(key=lambda c: (-c[0], c[1], c[2]))
        live_next = []
        for logp, hi, tok in cands[:beam]:
            hyp = Hypothesis(
                ids=live[hi].ids + [tok], logp=logp, state=states[hi],
                finished=(tok == eos),
            )
            (finished if hyp.finished else live_next).append(hyp)
        live = live_next
        if not live:
            break
    for hyp in live:
        hyp.finished = True  # hit max_len
    pool = finished + live
    return max(pool, key=lambda h: h.logp)


def sequence_logprob(params, ctx_ids_row, out_ids):
    """Total log-probability the model assigns to an output id sequence."""
    ctx = np.asarray(ctx_ids_row, dtype=np.int64)[None, :]
    mask = np.ones_like(ctx, dtype=np.float64)
    ban = _decode_ban(params.vocab_size)
    total = 0.0
    with ad.no_grad():
        enc = encode(params, ctx, mask)
        state = list(enc.final)
        prev = np.array([SOS], dtype=np.int64)
        for tok in out_ids:
            logits, state, _ = decode_step(params, enc, prev, state)
            total += float(_log_softmax(logits.data + ban)[0, tok])
            prev = np.array([tok], dtype=np.int64)
    return total


def beam_search(params, ctx_ids_row, beam=5, max_len=20):
    """Beam search for a single context (an id list); returns the best ids."""
    ctx = np.asarray(ctx_ids_row, dtype=np.int64)[None, :]
    mask = np.ones_like(ctx, dtype=np.float64)
    with ad.no_grad():
        enc = encode(params, ctx, mask)
        base_states = enc.states.data
        ban = _decode_ban(params.vocab_size)
        init = [
            (enc.final[l][0].data[0], enc.final[l][1].data[0])
            for l in range(params.layers)
        ]

        def step_fn(prev, states):
            k = len(states)
            enc_k = EncoderOutput(
                states=ad.Tensor(np.repeat(base_states, k, axis=0)),
                mask=np.repeat(mask, k, axis=0),
                final=None,
            )
            stacked = [
                (ad.Tensor(np.stack([s[l][0] for s in states])),
                 ad.Tensor(np.stack([s[l][1] for s in states])))
                for l in range(params.layers)
            ]
            logits, new_state, _ = decode_step(params, enc_k, prev, stacked)
            out_states = [
                [(new_state[l][0].data[i], new_state[l][1].data[i])
                 for l in range(params.layers)]
                for i in range(k)
            ]
            return _log_softmax(logits.data + ban), out_states

        best = beam_search_core(step_fn, init, beam, max_len)
    return best.ids


def _mle_batch_views(batch, mode):
    """(src_ids, src_mask, tgt_ids, tgt_mask) for generator or answer mode."""
    if mode == "question":
        return (batch.context, batch.context_mask,
                batch.question, batch.question_mask)
    if mode == "answer":
        ctx_rows = rows_from_batch(batch.context, batch.context_len)
        q_rows = rows_from_batch(batch.question, batch.question_len)
        ids, mask = answer_inputs(ctx_rows, q_rows)
        return ids, mask, batch.answer, batch.answer_mask
    raise ContractError(f"unknown mle mode {mode!r}")


def evaluate_mle(params, triples, vocab, mode="question", batch_size=64):
    """Teacher-forced loss per token and accuracy, dropout off."""
    from .data import encode_batch

    total_loss, tokens, correct = 0.0, 0, 0
    for start in range(0, len(triples), batch_size):
        batch = encode_batch(triples[start:start + batch_size], vocab)
        src_ids, src_mask, tgt_ids, tgt_mask = _mle_batch_views(batch, mode)
        with ad.no_grad():
            loss, stats = mle_loss(params, src_ids, src_mask, tgt_ids, tgt_mask,
                                   train=False)
        total_loss += loss.item()
        tokens += stats["tokens"]
        correct += stats["correct"]
    return {
        "loss_per_token": total_loss / tokens if tokens else 0.0,
        "accuracy": correct / tokens if tokens else 0.0,
    }


def train_mle(train_triples, held_triples, vocab, params, epochs,
              batch_size=32, lr=1e-4, seed=0, drop_rate=0.5,
              mode="question", log_fn=None):
    """Teacher-forced MLE pretraining; returns per-epoch report dicts."""
    from .data import make_batches
    from .optim import Adam

    opt = Adam(params.trainable_params(), lr=lr)
    rng_shuffle = np.random.default_rng([seed, 0])
    rng_model = np.random.default_rng([seed, 1])
    reports = []
    for epoch in range(epochs):
        total_loss, tokens = 0.0, 0
        for batch in make_batches(train_triples, vocab, batch_size, rng_shuffle):
            src_ids, src_mask, tgt_ids, tgt_mask = _mle_batch_views(batch, mode)
            loss, stats = mle_loss(params, src_ids, src_mask, tgt_ids, tgt_mask,
                                   train=True, drop_rate=drop_rate, rng=rng_model)
            ad.backward(loss)
            opt.step()
            total_loss += loss.item()
            tokens += stats["tokens"]
        held = evaluate_mle(params, held_triples, vocab, mode=mode) \
            if held_triples else {"loss_per_token": 0.0, "accuracy": 0.0}
        report = {
            "epoch": epoch,
            "train_loss_per_token": total_loss / tokens if tokens else 0.0,
            "heldout_loss_per_token": held["loss_per_token"],
            "heldout_accuracy": held["accuracy"],
        }
        reports.append(report)
        if log_fn:
            log_fn(report)
    return reports


@dataclass
class MixedRollout:
    """Teacher-forced prefix losses plus the sampled suffix bookkeeping."""

    mle_rows: object            # Tensor (B,) or None when delta == 0
    nll_rows: object            # Tensor (B,) or None when no row sampled
    pred_rows: list             # per-row ids: gold prefix ++ sampled suffix
    suffix: np.ndarray = field(default=None)   # bool (B,): row sampled a suffix


def mixed_decode(params, src_ids, src_mask, tgt_ids, tgt_mask, tgt_len,
                 delta, rng, max_len=20, train=True, drop_rate=0.0):
    """MIXER-style rollout: Delta teacher-forced steps, then self-fed sampling.

    The step after the prefix consumes the gold token at Delta (or SOS when
    Delta is 0). Rows whose gold question ends inside the prefix sample no
    suffix. At delta >= max target length this is exactly the mle_loss graph.
    """
    if not 0 <= delta:
        raise ContractError(f"delta must be >= 0, got {delta}")
    enc = encode(params, src_ids, src_mask, train, drop_rate, rng)
    batch = src_ids.shape[0]
    n_gold = tgt_ids.shape[1]
    prefix = min(delta, n_gold)

    mle_rows, state, prev = _teacher_forced_rows(
        params, enc, tgt_ids, tgt_mask, prefix, train, drop_rate, rng
    )

    alive = tgt_len > prefix
    pred_rows = [list(tgt_ids[i, :min(int(tgt_len[i]), prefix)]) for i in range(batch)]
    suffix = alive.copy()
    nll_rows = None
    ban = ad.Tensor(_decode_ban(params.vocab_size))
    for _ in range(prefix, max_len):
        if not alive.any():
            break
        logits, state, _ = decode_step(params, enc, prev, state, train, drop_rate, rng)
        sample_logits = ad.add_bias(logits, ban)
        lp = _log_softmax(sample_logits.data)
        p = np.exp(lp)
        cdf = np.cumsum(p, axis=1)
        u = rng.random(batch)
        # token j has the interval [cdf_{j-1}, cdf_j); zero-probability
        # (banned) tokens get width 0 and can never be drawn
        nxt = (cdf <= u[:, None]).sum(axis=1).clip(0, p.shape[1] - 1)
        nxt = np.where(alive, nxt, EOS)
        ce = ad.cross_entropy_rows(sample_logits, nxt, alive.astype(np.float64))
        nll_rows = ce if nll_rows is None else ad.add(nll_rows, ce)
        for i in range(batch):
            if alive[i]:
                pred_rows[i].append(int(nxt[i]))
        alive = alive & (nxt != EOS)
        prev = nxt
    return MixedRollout(mle_rows=mle_rows, nll_rows=nll_rows,
                        pred_rows=pred_rows, suffix=suffix)
