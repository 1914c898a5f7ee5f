"""Central finite-difference checks for the hand-written backward passes."""

from __future__ import annotations

import numpy as np

from .layers import lstm_cell, lstm_cell_backward, mse_loss


def relative_error(analytic, numeric, floor=1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _probe(loss_fn, targets, probes, rng, h):
    """Perturb ``probes`` random entries drawn across ``targets`` (pairs of
    (array, analytic_grad)) and return the relative errors."""
    sizes = np.array([a.size for a, _ in targets])
    which = rng.choice(len(targets), size=probes, p=sizes / sizes.sum())
    errs = []
    for j in which:
        arr, grad = targets[j]
        i = np.unravel_index(rng.integers(arr.size), arr.shape)
        old = arr[i]
        arr[i] = old + h
        fp = loss_fn()
        arr[i] = old - h
        fm = loss_fn()
        arr[i] = old
        errs.append(relative_error(grad[i], (fp - fm) / (2 * h)))
    return np.array(errs)


def check_layer(layer, x, rng, probes=100, h=1e-6):
    """Max relative error of ``layer`` gradients wrt its parameters and input
    for the scalar loss sum(G * layer(x)) with random G."""
    out = layer.forward(x)
    G = rng.standard_normal(out.shape)
    layer.zero_grad()
    dx = layer.backward(G)
    targets = [(layer.params[k], layer.grads[k].copy()) for k in sorted(layer.params)]
    targets.append((x, dx))
    return _probe(lambda: float(np.sum(G * layer.forward(x))), targets, probes, rng, h).max()


def check_lstm_cell(params, x, h_prev, c_prev, rng, probes=100, h=1e-6):
    """Same check for one LSTM step, with a loss on both h and c."""
    hh, cc, cache = lstm_cell(x, h_prev, c_prev, params)
    Gh, Gc = rng.standard_normal(hh.shape), rng.standard_normal(cc.shape)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    dx, dh, dc = lstm_cell_backward(Gh, Gc, cache, params, grads)

    def loss():
        a, b, _ = lstm_cell(x, h_prev, c_prev, params)
        return float(np.sum(Gh * a) + np.sum(Gc * b))

    targets = [(params[k], grads[k]) for k in sorted(params)] + [(x, dx), (h_prev, dh), (c_prev, dc)]
    return _probe(loss, targets, probes, rng, h).max()


def check_mse(pred, target, rng, probes=100, h=1e-6):
    _, grad = mse_loss(pred, target)
    return _probe(lambda: float(mse_loss(pred, target)[0]), [(pred, grad)], probes, rng, h).max()


def check_model(model, x, t, rng, probes=100, h=1e-6):
    """End-to-end check of a Model under the MSE loss (eval mode)."""
    model.zero_grad()
    loss, d = mse_loss(model.forward(x), t)
    model.backward(d)
    targets = [(p, g.copy()) for (_, _, p), (_, _, g) in zip(model.parameters(), model.gradients())]
    return _probe(lambda: float(mse_loss(model.forward(x), t)[0]), targets, probes, rng, h).max()
