"""Adversarial training: MIXER generator vs utility discriminator.

Positives are (context, true question, generated answer); negatives are
(context, generated question, generated answer). The answer generator stays
frozen throughout; gold answers never reach the discriminator.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import mixer, seq2seq, utility
from .data import Triple, encode_batch
from .errors import ContractError
from .optim import Adam


@dataclass
class GanConfig:
    """Alternation and budget knobs for the adversarial loop."""

    epochs: int = 4
    gen_steps: int = 1
    disc_steps: int = 1
    batch_size: int = 32
    beam: int = 5
    seed: int = 0
    gen_lr: float = 1e-4
    disc_lr: float = 1e-4
    drop_rate: float = 0.0
    freeze_discriminator: bool = False
    probe_size: int = 100

    def __post_init__(self):
        if self.gen_steps < 1 or self.disc_steps < 1:
            raise ContractError("gen_steps and disc_steps must both be >= 1")


@dataclass
class GanRoundReport:
    """Per-round probe numbers for the two players."""

    epoch: int
    mean_generator_reward: float
    discriminator_loss: float
    probe_accuracy: float
    probe_generated_score: float

    @classmethod
    def from_dict(cls, d):
        return cls(
            epoch=d["epoch"],
            mean_generator_reward=d["mean_heldout_reward"],
            discriminator_loss=d.get("mean_disc_loss", 0.0),
            probe_accuracy=d["probe_accuracy"],
            probe_generated_score=d["probe_generated_score"],
        )


def _decode_rows(vocab, id_rows):
    return [vocab.decode(row) for row in id_rows]


def build_disc_batch(batch, gen, answer_gen, vocab, beam=5, max_len=20, rng=None):
    """Labeled triples for one discriminator update; 1:1 positives:negatives.

    Answers on both sides come from the frozen answer generator, never from
    the dataset. Beam decoding makes the negatives deterministic; rng is
    accepted for signature stability but unused.
    """
    ctx_rows = [list(batch.context[i, batch.context_mask[i] > 0])
                for i in range(batch.size)]
    true_q = [list(batch.question[i, :batch.question_len[i]])
              for i in range(batch.size)]
    gen_q = [seq2seq.beam_search(gen, row, beam=beam, max_len=max_len)
             for row in ctx_rows]

    pos_ids, pos_mask = seq2seq.answer_inputs(ctx_rows, true_q)
    neg_ids, neg_mask = seq2seq.answer_inputs(ctx_rows, gen_q)
    pos_a = seq2seq.greedy_decode(answer_gen, pos_ids, pos_mask, max_len=max_len)
    neg_a = seq2seq.greedy_decode(answer_gen, neg_ids, neg_mask, max_len=max_len)

    ctx_tok = _decode_rows(vocab, ctx_rows)
    items = []
    for c, q, a in zip(ctx_tok, _decode_rows(vocab, true_q), _decode_rows(vocab, pos_a)):
        items.append(utility.LabeledTriple(Triple(c, q, a), 1, "true-pair"))
    for c, q, a in zip(ctx_tok, _decode_rows(vocab, gen_q), _decode_rows(vocab, neg_a)):
        items.append(utility.LabeledTriple(Triple(c, q, a), 0, "model-generated"))
    return items


def discriminator_step(disc_items, util_params, opt, vocab):
    """One BCE step on the utility discriminator; returns per-instance loss."""
    labels = {lt.label for lt in disc_items}
    if labels != {0, 1}:
        raise ContractError("discriminator batch needs both labels")
    loss = utility.bce_loss(util_params, disc_items, vocab)
    ad.backward(loss)
    opt.step()
    return loss.item()


def generator_step(batch, delta, gen, gen_opt, reward_fn, rng,
                   max_len=20, drop_rate=0.0):
    """One MIXER step whose reward is the live discriminator's score."""
    loss, _ = mixer.mixer_loss(gen, batch, delta, reward_fn, rng,
                               max_len=max_len, train=True, drop_rate=drop_rate)
    ad.backward(loss)
    gen_opt.step()
    return loss.item() / batch.size


def probe_metrics(held_triples, gen, answer_gen, util_params, vocab,
                  beam=5, max_len=20, cap=100):
    """Discriminator accuracy and mean generated-question score on a probe set."""
    probe = held_triples[:cap]
    if not probe:
        return {"probe_accuracy": 0.0, "probe_generated_score": 0.0}
    batch = encode_batch(probe, vocab)
    items = build_disc_batch(batch, gen, answer_gen, vocab, beam=beam,
                             max_len=max_len)
    n = len(probe)
    enc = encode_batch([lt.triple for lt in items], vocab)
    scores = utility.utility_score(util_params, enc)
    correct = sum(int((s > 0.5) == bool(lt.label)) for lt, s in zip(items, scores))
    return {
        "probe_accuracy": correct / len(items),
        "probe_generated_score": float(scores[n:].mean()),
    }


def train_gan(train_triples, held_triples, vocab, gen, answer_gen, util_params,
              schedule, config, start_epoch=0, heldout_cap=None, max_len=20,
              log_fn=None):
    """Alternate generator and discriminator updates per batch.

    With config.freeze_discriminator the per-batch work collapses to exactly
    the Max-Utility update, so equal seeds give bit-identical trajectories.
    """
    gen_opt = Adam(gen.trainable_params(), lr=config.gen_lr)
    disc_opt = Adam(util_params.params(), lr=config.disc_lr)
    rng_shuffle = np.random.default_rng([config.seed, 0])
    rng_model = np.random.default_rng([config.seed, 1])
    reward_fn = mixer.make_utility_reward(answer_gen, util_params, vocab)
    disc_losses = []

    def batch_fn(batch, delta):
        loss = 0.0
        for _ in range(config.gen_steps):
            loss = generator_step(batch, delta, gen, gen_opt, reward_fn,
                                  rng_model, max_len=max_len,
                                  drop_rate=config.drop_rate)
        if not config.freeze_discriminator:
            for _ in range(config.disc_steps):
                items = build_disc_batch(batch, gen, answer_gen, vocab,
                                         beam=config.beam, max_len=max_len)
                disc_losses.append(
                    discriminator_step(items, util_params, disc_opt, vocab)
                )
        return loss

    def epoch_hook(_e):
        out = probe_metrics(held_triples, gen, answer_gen, util_params, vocab,
                            beam=config.beam, max_len=max_len,
                            cap=config.probe_size)
        out["mean_disc_loss"] = (
            sum(disc_losses) / len(disc_losses) if disc_losses else 0.0
        )
        disc_losses.clear()
        return out

    return mixer.run_epochs(
        train_triples, held_triples, vocab, gen, schedule, config.epochs,
        config.batch_size, rng_shuffle, batch_fn, reward_fn,
        start_epoch=start_epoch, heldout_cap=heldout_cap, max_len=max_len,
        epoch_hook=epoch_hook, log_fn=log_fn,
    )
