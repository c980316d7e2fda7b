"""Independent reference implementations used as test oracles.

Everything here is written with plain loops and ``math`` so that it shares
no code path with the package under test.
"""
from __future__ import annotations

import math


def matmul_loops(a, b):
    m, k, n = len(a), len(b), len(b[0])
    return [[sum(a[i][p] * b[p][j] for p in range(k)) for j in range(n)] for i in range(m)]


def sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def softmax_row(z):
    m = max(z)
    e = [math.exp(v - m) for v in z]
    s = sum(e)
    return [v / s for v in e]


def ce_row(z, label: int) -> float:
    return -math.log(softmax_row(z)[label])


def soft_ce_row(z, target):
    p = softmax_row(z)
    return -sum(t * math.log(q) for t, q in zip(target, p))


def kl_row(zs, zt, tau):
    return tau * tau * soft_ce_row([v / tau for v in zs], softmax_row([v / tau for v in zt]))


def mean_rows(rows):
    return [sum(col) / len(rows) for col in zip(*rows)]


def all_losses(z_list, zt, labels, alpha, beta, tau):
    """Per-formula evaluation of every loss value, batch-averaged.

    ``z_list[t][b]`` is the logit row of sample ``b`` at step ``t``.
    """
    T, B = len(z_list), len(labels)
    ens = [mean_rows([z_list[t][b] for t in range(T)]) for b in range(B)]
    sce = sum(ce_row(ens[b], labels[b]) for b in range(B)) / B
    skl = sum(kl_row(ens[b], zt[b], tau) for b in range(B)) / B
    twce = sum(ce_row(z_list[t][b], labels[b]) for t in range(T) for b in range(B)) / (T * B)
    twkl = sum(kl_row(z_list[t][b], zt[b], tau) for t in range(T) for b in range(B)) / (T * B)
    twsd = sum(kl_row(z_list[t][b], ens[b], tau) for t in range(T) for b in range(B)) / (T * B)
    return {
        "sce": sce, "skl": skl, "skd": sce + alpha * skl,
        "twce": twce, "twkl": twkl, "twsd": twsd,
        "twkd": twce + alpha * twkl, "final": twce + alpha * twkl + beta * twsd,
    }


def snn_reference(params, x, T, decay=0.5, threshold=1.0):
    """Scalar-loop LIF network: returns logits[t][b][j]."""
    Ws, bs = params[0::2], params[1::2]
    n_layers = len(Ws)
    B = len(x)
    v = [[[0.0] * len(bs[l]) for _ in range(B)] for l in range(n_layers - 1)]
    s = [[[0.0] * len(bs[l]) for _ in range(B)] for l in range(n_layers - 1)]
    out = []
    for _ in range(T):
        zt = []
        for b in range(B):
            inp = list(x[b])
            for l in range(n_layers - 1):
                W, bias = Ws[l], bs[l]
                for j in range(len(bias)):
                    cur = bias[j] + sum(inp[i] * W[i][j] for i in range(len(inp)))
                    v[l][b][j] = decay * v[l][b][j] * (1.0 - s[l][b][j]) + cur
                    s[l][b][j] = 1.0 if v[l][b][j] >= threshold else 0.0
                inp = s[l][b]
            W, bias = Ws[-1], bs[-1]
            zt.append([bias[j] + sum(inp[i] * W[i][j] for i in range(len(inp)))
                       for j in range(len(bias))])
        out.append(zt)
    return out
