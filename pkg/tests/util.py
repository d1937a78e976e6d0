"""Naive reference implementations used as oracles across the suite.

Everything here is written with explicit python loops and no shared code
with the package internals, so agreement is evidence rather than tautology.
"""

import math

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def naive_affinity(x_node, x_seq, w_affinity):
    n = x_node.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for a in range(x_node.shape[1]):
                for b in range(x_seq.shape[1]):
                    acc += x_node[i, a] * w_affinity[a, b] * x_seq[j, b]
            out[i, j] = math.tanh(acc)
    return out


def naive_reference(x_node, x_seq, affinity, w_node, w_seq):
    n, d = x_node.shape
    out = np.zeros((n, d))
    for i in range(n):
        for k in range(d):
            acc = 0.0
            for a in range(d):
                acc += x_node[i, a] * w_node[a, k]
            for j in range(n):
                for a in range(d):
                    acc += affinity[i, j] * x_seq[j, a] * w_seq[a, k]
            out[i, k] = math.tanh(acc)
    return out


def naive_edge_weights(x_node, reference):
    n = x_node.shape[0]
    w = np.zeros((n, n))
    for s in range(n):
        for t in range(n):
            if s == t:
                continue
            ns = math.sqrt(sum(v * v for v in x_node[s]))
            nt = math.sqrt(sum(v * v for v in reference[t]))
            if ns == 0.0 or nt == 0.0:
                continue
            c = float(np.dot(x_node[s], reference[t])) / (ns * nt)
            w[s, t] = min(max(c, 0.0), 1.0)
    return w


def naive_cosine_weights(x, r):
    """Kernel-level variant: also returns the unclamped cosine table.

    The diagonal carries no edge, so the kernel leaves cos[s, s] at zero.
    """
    n = x.shape[0]
    w = np.zeros((n, n))
    cos = np.zeros((n, n))
    for s in range(n):
        for t in range(n):
            if s == t:
                continue
            nx = math.sqrt(sum(v * v for v in x[s]))
            nr = math.sqrt(sum(v * v for v in r[t]))
            c = 0.0 if nx == 0.0 or nr == 0.0 else float(np.dot(x[s], r[t])) / (nx * nr)
            cos[s, t] = c
            w[s, t] = min(max(c, 0.0), 1.0)
    return w, cos


def naive_gcn_aggregate(w, h):
    n, d = h.shape
    agg = np.zeros((n, d))
    for t in range(n):
        total = h[t].copy()
        denom = 1.0
        for s in range(n):
            total = total + w[s, t] * h[s]
            denom += w[s, t]
        agg[t] = total / denom
    return agg


def naive_gcn_forward(x, weights, layer1, layer2):
    h = x
    for layer in (layer1, layer2):
        agg = naive_gcn_aggregate(weights, h)
        pre = agg @ layer
        h = np.maximum(pre, 0.0)
    return h


def naive_softmax_rows(m):
    out = np.zeros_like(m)
    for i in range(m.shape[0]):
        shifted = m[i] - np.max(m[i])
        e = np.exp(shifted)
        out[i] = e / e.sum()
    return out


def naive_kl(e_str, e_seq, q_clamp=1e-12):
    p = naive_softmax_rows(np.asarray(e_str, dtype=np.float64))
    q = naive_softmax_rows(np.asarray(e_seq, dtype=np.float64))
    total = 0.0
    for i in range(p.shape[0]):
        row = 0.0
        for j in range(p.shape[1]):
            qv = max(q[i, j], q_clamp)
            pv = p[i, j]
            if pv > 0.0:
                row += pv * math.log(pv / qv)
        total += row
    return total / p.shape[0]


def naive_bce(probs, labels):
    total = 0.0
    for p, y in zip(probs, labels):
        total += -(y * math.log(p) + (1 - y) * math.log(1.0 - p))
    return total / len(probs)


def naive_metrics(probs, labels, threshold=0.5):
    preds = [1 if p >= threshold else 0 for p in probs]
    n = len(labels)
    accuracy = sum(1 for p, y in zip(preds, labels) if p == y) / n
    precision = recall = f1 = 0.0
    for cls in (0, 1):
        support = sum(1 for y in labels if y == cls)
        if support == 0:
            continue
        tp = sum(1 for p, y in zip(preds, labels) if p == cls and y == cls)
        pp = sum(1 for p in preds if p == cls)
        prec = tp / pp if pp else 0.0
        rec = tp / support
        f = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        precision += support / n * prec
        recall += support / n * rec
        f1 += support / n * f
    return {"accuracy": accuracy, "precision": precision, "recall": recall, "f1": f1}
