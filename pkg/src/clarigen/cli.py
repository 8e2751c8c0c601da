"""Command-line front end wiring the full pipeline.

Subcommands: ingest, synth-data, pretrain, train, generate, evaluate,
baseline-retrieve, score. Every run is replayable: config + seed + inputs
fully determine outputs, and run logs embed the resolved config. Exit codes:
0 success, 1 contract violation, 2 I/O failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import data, gan, metrics, mixer, retrieval, seq2seq, synthetic, utility
from .config import load_config
from .errors import ClarigenError
from .mixer import MixerSchedule


def _overrides(pairs):
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ClarigenError(f"--set expects key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        out[key.strip()] = value.strip()
    return out


def _config(args):
    return load_config(getattr(args, "config", None), _overrides(getattr(args, "set", None)))


def _log_writer(path, command, cfg):
    f = open(path, "w", encoding="utf-8")
    f.write(json.dumps({"command": command, "config": cfg.to_dict()},
                       sort_keys=True) + "\n")

    def write(record):
        f.write(json.dumps(record, sort_keys=True) + "\n")
        f.flush()

    return f, write


def _load_vocab_or_build(path, triples, cutoff):
    if os.path.exists(path):
        return data.Vocabulary.load(path)
    vocab = data.build_vocab(triples, cutoff=cutoff)
    vocab.save(path)
    return vocab


def _require(path, hint):
    if not os.path.exists(path):
        raise ClarigenError(f"missing {path}: run `{hint}` first")
    return path


def _new_generator(cfg, vocab, seed_tag, embedding=None):
    rng = np.random.default_rng([cfg.seed, seed_tag])
    return seq2seq.Seq2SeqParams(
        len(vocab), embed_dim=cfg.embed_dim, hidden=cfg.hidden,
        layers=cfg.layers, rng=rng, embedding=embedding,
    )


def _new_utility(cfg, vocab, seed_tag):
    rng = np.random.default_rng([cfg.seed, seed_tag])
    return utility.UtilityParams(
        len(vocab), embed_dim=cfg.embed_dim, hidden=cfg.hidden, rng=rng
    )


# role -> deterministic init stream tag, so the three pretrained models differ
_ROLE_SEED = {"generator": 10, "answer": 11, "utility": 12}


def cmd_ingest(args):
    count, skipped = 0, 0
    triples = []
    with open(args.input, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            title = obj.get("title", "")
            body = obj.get("body", "")
            context = (title + " " + body).strip()
            try:
                triples.append(data.make_triple(
                    context, obj.get("question", ""), obj.get("answer", "")
                ))
                count += 1
            except ClarigenError:
                skipped += 1
    data.save_triples(args.out, triples)
    if skipped:
        print(f"skipped {skipped} rows with empty question/answer", file=sys.stderr)
    print(f"wrote {count} triples to {args.out}")
    return 0


def cmd_synth_data(args):
    cfg = _config(args)
    rng = np.random.default_rng(args.seed if args.seed is not None else cfg.seed)
    triples = synthetic.generate_synthetic(args.n, rng)
    data.save_triples(args.out, triples)
    print(f"wrote {len(triples)} synthetic triples to {args.out}")
    return 0


def cmd_pretrain(args):
    cfg = _config(args)
    triples = data.load_triples(_require(args.data, "clarigen synth-data/ingest"))
    vocab = _load_vocab_or_build(args.vocab, triples, cfg.vocab_cutoff)
    train, held = data.holdout_split(triples)
    log_path = args.log or args.out + ".log.jsonl"
    log_file, log = _log_writer(log_path, f"pretrain --role {args.role}", cfg)
    try:
        if args.role in ("generator", "answer"):
            embedding = None
            if args.embeddings:
                embedding = data.load_embeddings(
                    args.embeddings, vocab, dim=cfg.embed_dim,
                    rng=np.random.default_rng([cfg.seed, 20]),
                )
            params = _new_generator(cfg, vocab, _ROLE_SEED[args.role], embedding)
            mode = "question" if args.role == "generator" else "answer"
            seq2seq.train_mle(
                train, held, vocab, params, epochs=args.epochs,
                batch_size=cfg.batch_size, lr=cfg.lr, seed=cfg.seed,
                drop_rate=cfg.dropout, mode=mode, log_fn=log,
            )
        else:  # utility
            params = _new_utility(cfg, vocab, _ROLE_SEED["utility"])
            labeled = utility.make_negatives(
                triples, np.random.default_rng([cfg.seed, 30])
            )
            utility.pretrain_utility(
                labeled, params, vocab, epochs=args.epochs,
                batch_size=cfg.batch_size, lr=cfg.lr,
                rng=np.random.default_rng([cfg.seed, 31]), log_fn=log,
            )
        params.save(args.out)
    finally:
        log_file.close()
    print(f"saved {args.role} checkpoint to {args.out}")
    return 0


def cmd_train(args):
    cfg = _config(args)
    triples = data.load_triples(args.data)
    vocab = data.Vocabulary.load(args.vocab)
    train, held = data.holdout_split(triples)
    schedule = MixerSchedule(max_len=cfg.max_question,
                             decrement=cfg.delta_decrement,
                             floor=cfg.delta_floor)

    gen = _new_generator(cfg, vocab, _ROLE_SEED["generator"])
    gen.load(_require(args.gen_in, "clarigen pretrain --role generator"))
    answer_gen = _new_generator(cfg, vocab, _ROLE_SEED["answer"])
    answer_gen.load(_require(args.answer, "clarigen pretrain --role answer"))
    util_params = _new_utility(cfg, vocab, _ROLE_SEED["utility"])
    util_params.load(_require(args.utility, "clarigen pretrain --role utility"))

    log_path = args.log or args.out + ".log.jsonl"
    log_file, log = _log_writer(log_path, f"train --stage {args.stage}", cfg)
    try:
        if args.stage == "max-utility":
            mixer.train_max_utility(
                train, held, vocab, gen, answer_gen, util_params, schedule,
                epochs=args.epochs, batch_size=cfg.batch_size, lr=cfg.lr,
                seed=cfg.seed, drop_rate=cfg.dropout,
                start_epoch=args.start_epoch, heldout_cap=args.heldout_cap,
                max_len=cfg.max_question, log_fn=log,
            )
        else:  # gan
            config = gan.GanConfig(
                epochs=args.epochs, gen_steps=args.gen_steps,
                disc_steps=args.disc_steps, batch_size=cfg.batch_size,
                beam=cfg.beam, seed=cfg.seed, gen_lr=cfg.lr, disc_lr=cfg.lr,
                drop_rate=cfg.dropout,
                freeze_discriminator=args.freeze_discriminator,
            )
            gan.train_gan(
                train, held, vocab, gen, answer_gen, util_params, schedule,
                config, start_epoch=args.start_epoch,
                heldout_cap=args.heldout_cap, max_len=cfg.max_question,
                log_fn=log,
            )
            if args.utility_out:
                util_params.save(args.utility_out)
        gen.save(args.out)
    finally:
        log_file.close()
    print(f"saved {args.stage} generator checkpoint to {args.out}")
    return 0


def cmd_generate(args):
    cfg = _config(args)
    vocab = data.Vocabulary.load(args.vocab)
    params = _new_generator(cfg, vocab)
    params.load(args.checkpoint)
    with open(args.contexts, "r", encoding="utf-8") as f:
        lines = [line.rstrip("\n") for line in f]
    outputs = []
    for line in lines:
        tokens = data.preprocess(line)[:cfg.max_context]
        ids = data.encode(tokens, vocab, cfg.max_context)
        if not ids:
            ids = [data.UNK]
        if args.mode == "greedy":
            ctx = np.asarray([ids], dtype=np.int64)
            out = seq2seq.greedy_decode(
                params, ctx, np.ones_like(ctx, dtype=np.float64),
                max_len=cfg.max_question,
            )[0]
        else:
            out = seq2seq.beam_search(params, ids, beam=args.beam or cfg.beam,
                                      max_len=cfg.max_question)
        outputs.append(" ".join(vocab.decode(out)))
    with open(args.out, "w", encoding="utf-8") as f:
        for line in outputs:
            f.write(line + "\n")
    print(f"wrote {len(outputs)} questions to {args.out}")
    return 0


def cmd_evaluate(args):
    cfg = _config(args)
    references = []
    with open(args.references, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            refs = json.loads(line)
            references.append([data.preprocess(r) for r in refs])
    systems = {}
    for spec_pair in args.system:
        if "=" not in spec_pair:
            raise ClarigenError(f"--system expects NAME=path, got {spec_pair!r}")
        name, _, path = spec_pair.partition("=")
        with open(path, "r", encoding="utf-8") as f:
            outputs = [data.preprocess(line.rstrip("\n")) for line in f]
        if len(outputs) != len(references):
            raise ClarigenError(
                f"system {name!r}: {len(outputs)} outputs vs "
                f"{len(references)} reference lines"
            )
        systems[name] = outputs
    report = metrics.evaluate_systems(systems, references)
    report["config"] = cfg.to_dict()
    sys.stdout.write(metrics.format_report(report))
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as f:
            f.write(json.dumps(report, sort_keys=True) + "\n")
    return 0


def cmd_baseline_retrieve(args):
    index = retrieval.build_index(data.load_triples(args.data))
    rng = np.random.default_rng(args.seed)
    with open(args.contexts, "r", encoding="utf-8") as f:
        lines = [line.rstrip("\n") for line in f]
    with open(args.out, "w", encoding="utf-8") as f:
        for line in lines:
            question = retrieval.lucene_baseline(
                data.preprocess(line), index, rng, k=args.k
            )
            f.write(" ".join(question) + "\n")
    print(f"wrote {len(lines)} retrieved questions to {args.out}")
    return 0


def cmd_score(args):
    cfg = _config(args)
    vocab = data.Vocabulary.load(args.vocab)
    params = _new_utility(cfg, vocab, _ROLE_SEED["utility"])
    params.load(args.checkpoint)
    triples = data.load_triples(args.data)
    scores = utility.score_triples(params, triples, vocab)
    with open(args.out, "w", encoding="utf-8") as f:
        for s in scores:
            f.write(f"{s:.6f}\n")
    print(f"wrote {len(scores)} scores to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="clarigen",
        description="Clarification question generation pipeline",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key")

    p = sub.add_parser("ingest", help="normalize raw records into triples.jsonl")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("synth-data", help="generate the synthetic corpus")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth_data)

    p = sub.add_parser("pretrain", help="pretrain generator, answer generator, or utility")
    common(p)
    p.add_argument("--role", choices=("generator", "answer", "utility"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", required=True, help="built and saved here if missing")
    p.add_argument("--embeddings", help="optional pretrained embedding text file")
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("train", help="max-utility or adversarial training")
    common(p)
    p.add_argument("--stage", choices=("max-utility", "gan"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--gen-in", required=True, help="MLE-pretrained generator checkpoint")
    p.add_argument("--answer", required=True, help="pretrained answer generator checkpoint")
    p.add_argument("--utility", required=True, help="pretrained utility checkpoint")
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--start-epoch", type=int, default=0,
                   help="schedule offset; pass the max-utility epoch count when staging gan")
    p.add_argument("--gen-steps", type=int, default=1)
    p.add_argument("--disc-steps", type=int, default=1)
    p.add_argument("--freeze-discriminator", action="store_true")
    p.add_argument("--heldout-cap", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--utility-out", help="where to save the updated discriminator (gan)")
    p.add_argument("--log")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("generate", help="decode questions for a contexts file")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--contexts", required=True, help="one raw context per line")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("greedy", "beam"), default="beam")
    p.add_argument("--beam", type=int, default=None)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("evaluate", help="diversity/BLEU/METEOR table for system outputs")
    common(p)
    p.add_argument("--references", required=True,
                   help="JSONL: one list of reference strings per instance")
    p.add_argument("--system", action="append", required=True,
                   metavar="NAME=path")
    p.add_argument("--json-out")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("baseline-retrieve", help="TF-IDF top-10 + random question pick")
    p.add_argument("--data", required=True)
    p.add_argument("--contexts", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(fn=cmd_baseline_retrieve)

    p = sub.add_parser("score", help="utility probabilities for a triples file")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_score)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ClarigenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, IndexError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
