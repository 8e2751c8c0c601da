"""Synthetic product-description triples for desk-scale runs.

Each instance describes a product (noun + model code) by listing values for
all attribute slots except one, deliberately omitted. The question asks about
the omitted slot and names the product; the answer reveals the hidden value.
The omitted slot is therefore recoverable from the context, usefulness is
learnable (a random donor's question names the wrong product/slot), and an
underfit MLE generator falls back to majority templates.
"""

import numpy as np

from .data import Triple, preprocess

SLOTS = [
    ("color", ["red", "blue", "green", "black", "white", "silver"]),
    ("size", ["small", "compact", "medium", "large", "huge", "slim"]),
    ("material", ["steel", "plastic", "ceramic", "glass", "bamboo", "copper"]),
    ("power", ["battery", "solar", "corded", "usb", "gas", "manual"]),
    ("weight", ["feather", "light", "moderate", "heavy", "hefty", "dense"]),
    ("capacity", ["tiny", "single", "double", "family", "party", "bulk"]),
    ("voltage", ["110v", "120v", "220v", "230v", "240v", "dual"]),
    ("warranty", ["none", "90days", "1year", "2year", "5year", "lifetime"]),
    ("style", ["classic", "modern", "rustic", "retro", "minimal", "ornate"]),
    ("finish", ["matte", "glossy", "brushed", "polished", "textured", "coated"]),
]

SLOT_NAMES = [name for name, _ in SLOTS]

NOUNS = [
    "kettle", "lamp", "blender", "toaster", "fan", "heater",
    "grill", "vacuum", "mop", "curtain", "cushion", "shelf",
]

CODES = [
    "ax1", "bx2", "cx3", "dx4", "ex5", "fx6", "gx7", "hx8", "jx9", "kx0",
    "lz1", "mz2", "nz3", "pz4", "qz5", "rz6", "sz7", "tz8", "vz9", "wz0",
    "ya1", "yb2", "yc3", "yd4", "ye5", "yf6", "yg7", "yh8", "yj9", "yk0",
]

_OPENINGS = [
    "the {noun} {code} is a quality product .",
    "this {noun} {code} is a great buy .",
]

_QUESTION_TEMPLATES = [
    "what {slot} does the {noun} {code} have ?",
    "can you tell me the {slot} of the {noun} {code} ?",
    "does the {noun} {code} come in a different {slot} ?",
]

_ANSWER_TEMPLATES = [
    "the {slot} is {value} .",
    "it has a {value} {slot} .",
]


def generate_synthetic(n, rng):
    """Generate n templated triples from a seeded generator.

    Omitted slots are balanced across instances (a fresh permutation per
    block of k), so a random donor's omitted slot mismatches with
    probability strictly above (k-1)/k.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    triples = []
    omit_order = []
    for i in range(n):
        if not omit_order:
            omit_order = list(rng.permutation(len(SLOTS)))
        noun = NOUNS[rng.integers(len(NOUNS))]
        code = CODES[rng.integers(len(CODES))]
        omitted = int(omit_order.pop())
        values = [vals[rng.integers(len(vals))] for _, vals in SLOTS]

        parts = [_OPENINGS[rng.integers(len(_OPENINGS))].format(noun=noun, code=code)]
        for idx, (slot, _) in enumerate(SLOTS):
            if idx != omitted:
                parts.append(f"{slot} : {values[idx]} .")
        context = " ".join(parts)

        slot = SLOT_NAMES[omitted]
        question = _QUESTION_TEMPLATES[rng.integers(len(_QUESTION_TEMPLATES))].format(
            slot=slot, noun=noun, code=code
        )
        answer = _ANSWER_TEMPLATES[rng.integers(len(_ANSWER_TEMPLATES))].format(
            slot=slot, value=values[omitted]
        )
        triples.append(Triple(preprocess(context), preprocess(question),
                              preprocess(answer)))
    return triples


def omitted_slot_of(triple):
    """Recover which slot a synthetic instance omitted (absent from context)."""
    present = set(triple.context)
    for name in SLOT_NAMES:
        if name not in present:
            return name
    return None


def question_slot_of(tokens):
    """The slot a (generated or gold) question asks about, if any."""
    for tok in tokens:
        if tok in SLOT_NAMES:
            return tok
    return None
