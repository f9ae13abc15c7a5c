"""Independent reference computations used by several test modules.

Nothing here imports the graph engine: the closed-form gradients below are
transcribed by hand for the two-hidden-node sigmoid network
    y = w5 f(w1 x + w3 t + b1) + w6 f(w2 x + w4 t + b2) + b3
with loss  mean_f[(y_t + 3 y_x)^2] + mean_b[(y(x, 0) - x exp(-x^2))^2].
"""

import math

NAMES = ("w1", "w2", "w3", "w4", "w5", "w6", "b1", "b2", "b3")


def sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def closed_form_gradients(p, interior, initial_x, literal_w4=False):
    """dL/dtheta from the hand-derived expressions.

    The printed expression for dL_f/dw4 uses w5 in its second term; the
    chain rule gives w6.  ``literal_w4`` reproduces the printed form.
    """
    w1, w2, w3, w4, w5, w6, b1, b2, b3 = (p[k] for k in NAMES)
    g = dict.fromkeys(NAMES, 0.0)
    nf = len(interior)
    for x, t in interior:
        f1 = sig(w1 * x + w3 * t + b1)
        f2 = sig(w2 * x + w4 * t + b2)
        d1 = f1 * (1 - f1)
        d2 = f2 * (1 - f2)
        A = w5 * d1 * (3 * w1 + w3) + w6 * d2 * (3 * w2 + w4)
        k = 2.0 / nf * A
        g["w1"] += k * (x * w5 * (3 * w1 + w3) * d1 * (1 - 2 * f1) + 3 * w5 * d1)
        g["w2"] += k * (x * w6 * (3 * w2 + w4) * d2 * (1 - 2 * f2) + 3 * w6 * d2)
        g["w3"] += k * (t * w5 * (3 * w1 + w3) * d1 * (1 - 2 * f1) + w5 * d1)
        w4_lead = w5 if literal_w4 else w6
        g["w4"] += k * (t * w6 * (3 * w2 + w4) * d2 * (1 - 2 * f2) + w4_lead * d2)
        g["b1"] += k * (w5 * (3 * w1 + w3) * d1 * (1 - 2 * f1))
        g["b2"] += k * (w6 * (3 * w2 + w4) * d2 * (1 - 2 * f2))
        g["w5"] += k * (d1 * (3 * w1 + w3))
        g["w6"] += k * (d2 * (3 * w2 + w4))
        # dL_f/db3 = 0
    nb = len(initial_x)
    for x in initial_x:
        h1 = sig(w1 * x + b1)
        h2 = sig(w2 * x + b2)
        B = w5 * h1 + w6 * h2 + b3 - x * math.exp(-x * x)
        k = 2.0 / nb * B
        g["w1"] += k * x * w5 * h1 * (1 - h1)
        g["w2"] += k * x * w6 * h2 * (1 - h2)
        # dL_b/dw3 = dL_b/dw4 = 0
        g["b1"] += k * w5 * h1 * (1 - h1)
        g["b2"] += k * w6 * h2 * (1 - h2)
        g["w5"] += k * h1
        g["w6"] += k * h2
        g["b3"] += k
    return g


def closed_form_terms(p, interior, initial_x):
    """(L_f, L_b) for the same network, by hand."""
    w1, w2, w3, w4, w5, w6, b1, b2, b3 = (p[k] for k in NAMES)
    lf = 0.0
    for x, t in interior:
        f1 = sig(w1 * x + w3 * t + b1)
        f2 = sig(w2 * x + w4 * t + b2)
        A = w5 * f1 * (1 - f1) * (3 * w1 + w3) + w6 * f2 * (1 - f2) * (3 * w2 + w4)
        lf += A * A / len(interior)
    lb = 0.0
    for x in initial_x:
        B = w5 * sig(w1 * x + b1) + w6 * sig(w2 * x + b2) + b3 - x * math.exp(-x * x)
        lb += B * B / len(initial_x)
    return lf, lb


def flat_to_named(flat):
    """Network flatten order is W0 row-major [w1, w3, w2, w4], b0 [b1, b2], W1 [w5, w6], b1 [b3]."""
    order = ("w1", "w3", "w2", "w4", "b1", "b2", "w5", "w6", "b3")
    return {k: float(v) for k, v in zip(order, flat)}


def named_to_flat(p):
    return [p[k] for k in ("w1", "w3", "w2", "w4", "b1", "b2", "w5", "w6", "b3")]


def sampled_fd_check(loss, params, coefficient=None, n_sample=20, seed=0, h=1e-5):
    """Compare the engine gradient with central differences at ``n_sample`` parameter indices.

    Returns (indices, engine values, finite-difference values).  Central
    differences are taken on the scalar total loss by perturbing one flat
    entry at a time.
    """
    import numpy as np

    ev = loss.evaluate(params, coefficient)
    grad, _ = loss_gradient_for(loss, ev)
    flat = params.flatten()
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(flat.size, size=min(n_sample, flat.size), replace=False))
    fd = np.empty(idx.size)
    for k, i in enumerate(idx):
        step = h * max(1.0, abs(flat[i]))
        up, dn = flat.copy(), flat.copy()
        up[i] += step
        dn[i] -= step
        f_up = float(loss.evaluate(params.with_flat(up), coefficient)[loss.total])
        f_dn = float(loss.evaluate(params.with_flat(dn), coefficient)[loss.total])
        fd[k] = (f_up - f_dn) / (2 * step)
    return idx, grad[idx], fd


def loss_gradient_for(loss, ev):
    from transport_pinn.loss import loss_gradient

    return loss_gradient(loss, ev)
