"""MIXER training: annealed MLE-to-REINFORCE with a self-critical baseline.

The reward of a question is the utility probability of the answer a frozen
answer generator would give. train_max_utility and the adversarial loop in
gan.py share run_epochs, so freezing the discriminator reproduces
Max-Utility trajectories exactly.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import seq2seq, utility
from .data import Batch, make_batches
from .errors import ContractError


@dataclass
class MixerSchedule:
    """Anneals the teacher-forced prefix length by epoch."""

    max_len: int = 20
    decrement: int = 2
    floor: int = 2

    def delta(self, epoch):
        if epoch < 0:
            raise ContractError(f"epoch must be >= 0, got {epoch}")
        return max(self.floor, self.max_len - self.decrement * epoch)


def delta_for_epoch(schedule, epoch):
    return schedule.delta(epoch)


@dataclass
class RewardRecord:
    """Sampled reward, greedy baseline, and their difference for one row."""

    r_pred: float
    r_base: float

    @property
    def advantage(self):
        return self.r_pred - self.r_base


def make_utility_reward(answer_gen, util_params, vocab, max_answer_len=20):
    """Reward closure: r(c, q) = utility(c, q, answer_gen's greedy answer).

    answer_gen and util_params are captured by reference; pass frozen copies
    for Max-Utility, the live discriminator for adversarial training. No
    gradient ever flows into either (decoding and scoring run off-tape).
    """

    def reward_fn(ctx_rows, q_rows):
        if not ctx_rows:
            return np.zeros(0)
        for q in q_rows:
            if len(q) == 0:
                raise ContractError("reward of an empty question is undefined")
        ids, mask = seq2seq.answer_inputs(ctx_rows, q_rows)
        answers = seq2seq.greedy_decode(answer_gen, ids, mask, max_len=max_answer_len)
        batch = _reward_batch(ctx_rows, q_rows, answers)
        return utility.utility_score(util_params, batch)

    return reward_fn


def _pad_rows(rows):
    width = max(1, max(len(r) for r in rows))
    ids = np.zeros((len(rows), width), dtype=np.int64)
    mask = np.zeros((len(rows), width), dtype=np.float64)
    lens = np.zeros(len(rows), dtype=np.int64)
    for i, r in enumerate(rows):
        ids[i, :len(r)] = r
        mask[i, :len(r)] = 1.0
        lens[i] = len(r)
    return ids, lens, mask


def _reward_batch(ctx_rows, q_rows, a_rows):
    from .data import EOS

    # greedy answers always carry at least one token, but guard anyway:
    # encode_avg rejects empty rows
    a_rows = [r if r else [EOS] for r in a_rows]
    return Batch(*_pad_rows(ctx_rows), *_pad_rows(q_rows), *_pad_rows(a_rows))


def sequence_reward(ctx_row, q_row, answer_gen, util_params, vocab=None):
    """Reward for a single (context, question) pair."""
    fn = make_utility_reward(answer_gen, util_params, vocab)
    return float(fn([list(ctx_row)], [list(q_row)])[0])


def self_critical_baseline(ctx_ids, ctx_mask, gen, reward_fn, max_len=20):
    """Reward of the current model's own greedy decodes (no gradients)."""
    greedy = seq2seq.greedy_decode(gen, ctx_ids, ctx_mask, max_len=max_len)
    ctx_rows = [list(ctx_ids[i, ctx_mask[i] > 0]) for i in range(ctx_ids.shape[0])]
    return reward_fn(ctx_rows, greedy)


def reinforce_term(nll_rows, advantages):
    """Policy-gradient surrogate: sum_b adv_b * NLL_b with constant advantage."""
    return ad.tsum(ad.mul(ad.Tensor(np.asarray(advantages, dtype=np.float64)),
                          nll_rows))


def mixer_loss(gen, batch, delta, reward_fn, rng, max_len=20,
               train=True, drop_rate=0.0):
    """MLE prefix loss plus advantage-weighted NLL of the sampled suffix.

    Returns (loss tensor, records) where records maps batch rows to
    RewardRecords (rows without a sampled suffix get none).
    """
    rollout = seq2seq.mixed_decode(
        gen, batch.context, batch.context_mask,
        batch.question, batch.question_mask, batch.question_len,
        delta, rng, max_len=max_len, train=train, drop_rate=drop_rate,
    )
    records = {}
    loss = None
    if rollout.mle_rows is not None:
        loss = ad.tsum(rollout.mle_rows)
    if rollout.nll_rows is not None:
        rows = np.flatnonzero(rollout.suffix)
        ctx_rows = [list(batch.context[i, batch.context_mask[i] > 0]) for i in rows]
        q_pred = [rollout.pred_rows[i] for i in rows]
        greedy = seq2seq.greedy_decode(
            gen, batch.context[rows], batch.context_mask[rows], max_len=max_len
        )
        r_pred = reward_fn(ctx_rows, q_pred)
        r_base = reward_fn(ctx_rows, greedy)
        adv = np.zeros(batch.size)
        for k, i in enumerate(rows):
            adv[i] = r_pred[k] - r_base[k]
            records[int(i)] = RewardRecord(float(r_pred[k]), float(r_base[k]))
        term = reinforce_term(rollout.nll_rows, adv)
        loss = term if loss is None else ad.add(loss, term)
    return loss, records


def heldout_mean_reward(gen, held_triples, vocab, reward_fn, batch_size=64,
                        max_len=20, cap=None):
    """Mean reward of greedy decodes on held-out contexts."""
    from .data import encode_batch

    triples = held_triples[:cap] if cap else held_triples
    if not triples:
        return 0.0
    total, count = 0.0, 0
    for start in range(0, len(triples), batch_size):
        chunk = encode_batch(triples[start:start + batch_size], vocab)
        greedy = seq2seq.greedy_decode(gen, chunk.context, chunk.context_mask,
                                       max_len=max_len)
        ctx_rows = [list(chunk.context[i, chunk.context_mask[i] > 0])
                    for i in range(chunk.size)]
        total += float(reward_fn(ctx_rows, greedy).sum())
        count += chunk.size
    return total / count


def run_epochs(train_triples, held_triples, vocab, gen, schedule,
               epochs, batch_size, rng_shuffle, batch_fn, eval_reward_fn,
               start_epoch=0, heldout_cap=None, max_len=20,
               epoch_hook=None, log_fn=None):
    """Shared epoch loop for Max-Utility and adversarial training.

    batch_fn(batch, delta) performs the per-batch updates and returns the
    generator loss value; eval_reward_fn scores held-out greedy decodes.
    """
    reports = []
    for e in range(epochs):
        delta = schedule.delta(start_epoch + e)
        total, count = 0.0, 0
        for batch in make_batches(train_triples, vocab, batch_size, rng_shuffle):
            total += batch_fn(batch, delta) * batch.size
            count += batch.size
        report = {
            "epoch": start_epoch + e,
            "delta": delta,
            "mean_loss": total / count if count else 0.0,
            "mean_heldout_reward": heldout_mean_reward(
                gen, held_triples, vocab, eval_reward_fn, cap=heldout_cap,
                max_len=max_len,
            ),
        }
        if epoch_hook:
            report.update(epoch_hook(e) or {})
        reports.append(report)
        if log_fn:
            log_fn(report)
    return reports


def train_max_utility(train_triples, held_triples, vocab, gen, answer_gen,
                      util_params, schedule, epochs, batch_size=32, lr=1e-4,
                      seed=0, drop_rate=0.0, start_epoch=0, heldout_cap=None,
                      max_len=20, log_fn=None):
    """REINFORCE-anneal the MLE-pretrained generator against the frozen reward."""
    from .optim import Adam

    opt = Adam(gen.trainable_params(), lr=lr)
    rng_shuffle = np.random.default_rng([seed, 0])
    rng_model = np.random.default_rng([seed, 1])
    reward_fn = make_utility_reward(answer_gen, util_params, vocab)

    def batch_fn(batch, delta):
        loss, _ = mixer_loss(gen, batch, delta, reward_fn, rng_model,
                             max_len=max_len, train=True, drop_rate=drop_rate)
        ad.backward(loss)
        opt.step()
        return loss.item() / batch.size

    return run_epochs(train_triples, held_triples, vocab, gen, schedule,
                      epochs, batch_size, rng_shuffle, batch_fn, reward_fn,
                      start_epoch=start_epoch, heldout_cap=heldout_cap,
                      max_len=max_len, log_fn=log_fn)
