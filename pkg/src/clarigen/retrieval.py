"""TF-IDF retrieval baseline: nearest training contexts, random question pick.

idf = ln((N+1)/(df+1)) + 1 over distinct contexts; vectors are L2-normalized,
so ranking is by cosine similarity.
"""

import math
from collections import Counter

import numpy as np

from .errors import ContractError


class TfIdfIndex:
    """Sparse tf-idf vectors over distinct training contexts."""

    def __init__(self, doc_tokens, doc_questions):
        self.n_docs = len(doc_tokens)
        self.doc_questions = doc_questions
        df = Counter()
        for toks in doc_tokens:
            df.update(set(toks))
        self.idf = {
            term: math.log((self.n_docs + 1) / (count + 1)) + 1.0
            for term, count in df.items()
        }
        self.vectors = [self._vector(toks) for toks in doc_tokens]

    def _vector(self, tokens):
        tf = Counter(tokens)
        weights = {
            term: count * self.idf.get(term, math.log(self.n_docs + 1) + 1.0)
            for term, count in tf.items()
        }
        norm = math.sqrt(sum(w * w for w in weights.values()))
        if norm == 0.0:
            return {}
        return {term: w / norm for term, w in weights.items()}

    def cosine(self, query_vector, doc_id):
        doc = self.vectors[doc_id]
        if len(query_vector) > len(doc):
            query_vector, doc = doc, query_vector
        return sum(w * doc.get(term, 0.0) for term, w in query_vector.items())


def build_index(triples):
    """One document per distinct context; questions grouped under it."""
    if not triples:
        raise ContractError("build_index needs a non-empty training set")
    doc_tokens = []
    doc_questions = []
    seen = {}
    for t in triples:
        key = tuple(t.context)
        if key not in seen:
            seen[key] = len(doc_tokens)
            doc_tokens.append(list(t.context))
            doc_questions.append([])
        doc_questions[seen[key]].append(list(t.question))
    return TfIdfIndex(doc_tokens, doc_questions)


def top_k(context_tokens, index, k=10):
    """Ids of the k most cosine-similar contexts; ties break by id."""
    query = index._vector(list(context_tokens))
    sims = [(index.cosine(query, d), d) for d in range(index.n_docs)]
    sims.sort(key=lambda s: (-s[0], s[1]))
    return [d for _, d in sims[:k]]


def lucene_baseline(context_tokens, index, rng, k=10):
    """Uniform random question from the multiset attached to the top-k docs."""
    docs = top_k(context_tokens, index, k=k)
    candidates = [q for d in docs for q in index.doc_questions[d]]
    if not candidates:
        raise ContractError("no candidate questions in the top-k contexts")
    return list(candidates[rng.integers(len(candidates))])
