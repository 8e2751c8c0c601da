"""Automatic evaluation: trigram diversity, corpus BLEU, stem-match METEOR.

meteor_lite implements the exact + stemmed matching stages only (no synonym
database); numbers from it are deliberately not called METEOR.
"""

import math
from collections import Counter
from dataclasses import dataclass

from .errors import ContractError


@dataclass
class EvalInstance:
    """One hypothesis with its reference set."""

    hypothesis: list
    references: list

    def __post_init__(self):
        if not self.references or all(len(r) == 0 for r in self.references):
            raise ContractError("an instance needs at least one non-empty reference")


def _ngrams(tokens, n):
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def diversity(outputs, n=3):
    """Distinct n-grams over total n-grams, pooled across all outputs."""
    if n < 1:
        raise ContractError(f"n must be >= 1, got {n}")
    seen = set()
    total = 0
    for out in outputs:
        grams = _ngrams(list(out), n)
        total += len(grams)
        seen.update(grams)
    return len(seen) / total if total else 0.0


def bleu(instances, max_n=4):
    """Corpus-level multi-reference BLEU x100, no smoothing.

    Clipped n-gram precision against the per-reference maximum, geometric
    mean over n=1..max_n, brevity penalty from the per-instance closest
    reference length (ties toward the shorter reference).
    """
    if not instances:
        raise ContractError("bleu needs a non-empty corpus")
    correct = [0] * max_n
    total = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for inst in instances:
        hyp = list(inst.hypothesis)
        refs = [list(r) for r in inst.references]
        hyp_len += len(hyp)
        ref_len += min((abs(len(r) - len(hyp)), len(r)) for r in refs)[1]
        for n in range(1, max_n + 1):
            counts = Counter(_ngrams(hyp, n))
            if not counts:
                continue
            max_ref = Counter()
            for r in refs:
                for gram, c in Counter(_ngrams(r, n)).items():
                    if c > max_ref[gram]:
                        max_ref[gram] = c
            total[n - 1] += sum(counts.values())
            correct[n - 1] += sum(min(c, max_ref[gram]) for gram, c in counts.items())
    precisions = [
        (correct[i] / total[i]) if total[i] else 0.0 for i in range(max_n)
    ]
    if min(precisions) == 0.0:
        return 0.0
    log_mean = sum(math.log(p) for p in precisions) / max_n
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / max(hyp_len, 1))
    return 100.0 * bp * math.exp(log_mean)


_DOUBLED = set("bdfglmnprt")


def stem(token):
    """Deterministic suffix stripping: ing, ed, es, s, with doubling repair."""
    for suffix in ("ing", "ed", "es", "s"):
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            base = token[:-len(suffix)]
            if len(base) >= 4 and base[-1] == base[-2] and base[-1] in _DOUBLED:
                base = base[:-1]
            return base
    return token


def _align(hyp, ref):
    """Two-stage greedy alignment; returns list of (hyp_pos, ref_pos)."""
    pairs = []
    used_h = [False] * len(hyp)
    used_r = [False] * len(ref)
    for exact in (True, False):
        for i, h in enumerate(hyp):
            if used_h[i]:
                continue
            key = h if exact else stem(h)
            for j, r in enumerate(ref):
                if used_r[j]:
                    continue
                if key == (r if exact else stem(r)):
                    pairs.append((i, j))
                    used_h[i] = True
                    used_r[j] = True
                    break
    return sorted(pairs)


def _chunks(pairs):
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor_lite(instance, alpha=0.9, beta=3.0, gamma=0.5):
    """Exact+stem unigram F-mean with a fragmentation penalty; max over refs."""
    hyp = list(instance.hypothesis)
    if not hyp:
        raise ContractError("meteor_lite needs a non-empty hypothesis")
    best = 0.0
    for ref in instance.references:
        ref = list(ref)
        if not ref:
            continue
        pairs = _align(hyp, ref)
        m = len(pairs)
        if m == 0:
            continue
        p = m / len(hyp)
        r = m / len(ref)
        fmean = p * r / (alpha * p + (1.0 - alpha) * r)
        penalty = gamma * (_chunks(pairs) / m) ** beta
        best = max(best, fmean * (1.0 - penalty))
    return best


def evaluate_systems(system_outputs, references, diversity_n=3):
    """Per-system Diversity/BLEU/METEOR rows plus the reference diversity.

    system_outputs: {name: list of token lists}, aligned with references
    (list of reference sets). Misaligned counts are an error.
    """
    n_instances = len(references)
    rows = {}
    for name, outputs in system_outputs.items():
        if len(outputs) != n_instances:
            raise ContractError(
                f"system {name!r} has {len(outputs)} outputs "
                f"for {n_instances} reference sets"
            )
        instances = [
            EvalInstance(hypothesis=h, references=refs)
            for h, refs in zip(outputs, references)
        ]
        rows[name] = {
            "diversity": diversity(outputs, n=diversity_n),
            "bleu": bleu(instances),
            "meteor": (
                sum(meteor_lite(inst) for inst in instances) / n_instances
                if n_instances else 0.0
            ),
        }
    flat_refs = [r for refs in references for r in refs]
    return {
        "reference_diversity": diversity(flat_refs, n=diversity_n),
        "systems": rows,
    }


def format_report(report):
    """Render the evaluate_systems output as a fixed-width text table."""
    lines = [f"{'model':<16} {'diversity':>10} {'bleu':>8} {'meteor':>8}"]
    lines.append(
        f"{'reference':<16} {report['reference_diversity']:>10.4f} "
        f"{'-':>8} {'-':>8}"
    )
    for name, row in report["systems"].items():
        lines.append(
            f"{name:<16} {row['diversity']:>10.4f} "
            f"{row['bleu']:>8.2f} {row['meteor']:>8.4f}"
        )
    return "\n".join(lines) + "\n"
