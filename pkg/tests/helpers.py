"""Shared test utilities: finite-difference gradient oracle and helpers."""

import numpy as np

from clarigen import autodiff as ad


def finite_diff(f, tensors, h=1e-5):
    """Central finite differences of scalar f() w.r.t. each tensor's data.

    Evaluations run with recording off so the tape stays clean; f must be
    deterministic (reseed any rng it uses on every call).
    """
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            with ad.no_grad():
                fp = float(f())
            flat[i] = orig - h
            with ad.no_grad():
                fm = float(f())
            flat[i] = orig
            gf[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def analytic_grads(loss_fn, tensors):
    """Evaluate loss_fn() on a fresh tape, backprop, return grads."""
    for t in tensors:
        t.zero_grad()
    graph = ad.Graph()
    with ad.use_graph(graph):
        loss = loss_fn()
        graph.backward(loss)
    return [np.array(t.grad) for t in tensors]


def max_rel_err(analytic, numeric, floor=1e-4):
    """max |a - n| / max(|a|, |n|, floor).

    The floor turns the comparison absolute for near-zero gradients, where
    central differences at h=1e-5 carry ~1e-10 of roundoff noise that would
    otherwise dominate a pure ratio.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


def check_gradients(loss_fn, tensors, h=1e-5, tol=1e-4):
    """Assert analytic grads match central finite differences; returns the error."""
    ana = analytic_grads(loss_fn, tensors)
    num = finite_diff(lambda: loss_fn().item(), tensors, h=h)
    err = max_rel_err(ana, num)
    assert err < tol, f"gradient mismatch: max relative error {err}"
    return err
