"""Hot numeric kernels: numba-jitted loops with a pure-numpy fallback.

The two kernel families here dominate training time (both are O(N^2 * d)
per article):

* pairwise clamped-cosine edge weights and their backward pass,
* incoming-edge GCN aggregation with unit self-loop and its backward pass.

Backend selection happens once at import time from the BREAK_BACKEND
environment variable: "numba", "numpy", or unset/"auto" (numba when
importable, numpy otherwise). ``use()`` switches backends at runtime,
which the benchmark and the cross-backend tests rely on.

Both backends compute the same math. Each backend accumulates in a fixed
order, so repeated runs on one backend are bit-identical; results across
backends agree to ~1e-15 but not bit-for-bit (loop vs BLAS summation).
"""

import os
from types import SimpleNamespace

import numpy as np

_ENV_VAR = "BREAK_BACKEND"


# ---------------------------------------------------------------------------
# numpy implementations


def _cosine_weights_fwd_np(x, r):
    xn = np.sqrt(np.einsum("ij,ij->i", x, x))
    rn = np.sqrt(np.einsum("ij,ij->i", r, r))
    xs = np.where(xn > 0.0, xn, 1.0)
    rs = np.where(rn > 0.0, rn, 1.0)
    cos = (x / xs[:, None]) @ (r / rs[:, None]).T
    cos[xn == 0.0, :] = 0.0
    cos[:, rn == 0.0] = 0.0
    np.fill_diagonal(cos, 0.0)
    w = np.clip(cos, 0.0, 1.0)
    return w, cos, xn, rn


def _cosine_weights_bwd_np(x, r, cos, xn, rn, d_w):
    # clamp has subgradient 0 outside (0, 1); diagonal is structural zero
    mask = (cos > 0.0) & (cos < 1.0)
    np.fill_diagonal(mask, False)
    g = np.where(mask, d_w, 0.0)
    xs = np.where(xn > 0.0, xn, 1.0)
    rs = np.where(rn > 0.0, rn, 1.0)
    xh = x / xs[:, None]
    rh = r / rs[:, None]
    gc = g * cos
    d_x = (g @ rh - gc.sum(axis=1)[:, None] * xh) / xs[:, None]
    d_r = (g.T @ xh - gc.sum(axis=0)[:, None] * rh) / rs[:, None]
    d_x[xn == 0.0] = 0.0
    d_r[rn == 0.0] = 0.0
    return d_x, d_r


def _gcn_aggregate_fwd_np(w, h):
    denom = w.sum(axis=0) + 1.0
    agg = (w.T @ h + h) / denom[:, None]
    return agg, denom


def _gcn_aggregate_bwd_np(w, h, agg, denom, d_agg):
    d_norm = d_agg / denom[:, None]
    d_h = w @ d_norm + d_norm
    d_w = h @ d_norm.T - np.einsum("tf,tf->t", agg, d_norm)[None, :]
    return d_h, d_w


_NUMPY = SimpleNamespace(
    name="numpy",
    cosine_weights_fwd=_cosine_weights_fwd_np,
    cosine_weights_bwd=_cosine_weights_bwd_np,
    gcn_aggregate_fwd=_gcn_aggregate_fwd_np,
    gcn_aggregate_bwd=_gcn_aggregate_bwd_np,
)


# ---------------------------------------------------------------------------
# numba implementations (built on demand so BREAK_BACKEND=numpy never
# pays the numba import / JIT cost)

_numba_ns = None


def _build_numba():
    from numba import njit

    @njit(cache=True)
    def cosine_weights_fwd(x, r):
        n, d = x.shape
        xn = np.empty(n)
        rn = np.empty(n)
        for i in range(n):
            acc = 0.0
            for j in range(d):
                acc += x[i, j] * x[i, j]
            xn[i] = np.sqrt(acc)
            acc = 0.0
            for j in range(d):
                acc += r[i, j] * r[i, j]
            rn[i] = np.sqrt(acc)
        w = np.zeros((n, n))
        cos = np.zeros((n, n))
        for s in range(n):
            if xn[s] == 0.0:
                continue
            for t in range(n):
                if t == s or rn[t] == 0.0:
                    continue
                dot = 0.0
                for j in range(d):
                    dot += x[s, j] * r[t, j]
                c = dot / (xn[s] * rn[t])
                cos[s, t] = c
                w[s, t] = min(max(c, 0.0), 1.0)
        return w, cos, xn, rn

    @njit(cache=True)
    def cosine_weights_bwd(x, r, cos, xn, rn, d_w):
        n, d = x.shape
        d_x = np.zeros((n, d))
        d_r = np.zeros((n, d))
        for s in range(n):
            if xn[s] == 0.0:
                continue
            inv_x = 1.0 / xn[s]
            for t in range(n):
                if t == s or rn[t] == 0.0:
                    continue
                c = cos[s, t]
                if c <= 0.0 or c >= 1.0:
                    continue
                g = d_w[s, t]
                if g == 0.0:
                    continue
                inv_r = 1.0 / rn[t]
                for j in range(d):
                    xh = x[s, j] * inv_x
                    rh = r[t, j] * inv_r
                    d_x[s, j] += g * (rh - c * xh) * inv_x
                    d_r[t, j] += g * (xh - c * rh) * inv_r
        return d_x, d_r

    @njit(cache=True)
    def gcn_aggregate_fwd(w, h):
        n, f = h.shape
        denom = np.empty(n)
        for t in range(n):
            acc = 0.0
            for s in range(n):
                acc += w[s, t]
            denom[t] = acc + 1.0
        agg = np.empty((n, f))
        for t in range(n):
            inv = 1.0 / denom[t]
            for j in range(f):
                acc = h[t, j]
                for s in range(n):
                    acc += w[s, t] * h[s, j]
                agg[t, j] = acc * inv
        return agg, denom

    @njit(cache=True)
    def gcn_aggregate_bwd(w, h, agg, denom, d_agg):
        n, f = h.shape
        d_h = np.zeros((n, f))
        d_w = np.empty((n, n))
        for t in range(n):
            inv = 1.0 / denom[t]
            rowdot = 0.0
            for j in range(f):
                rowdot += agg[t, j] * d_agg[t, j] * inv
            for s in range(n):
                acc = 0.0
                for j in range(f):
                    acc += h[s, j] * d_agg[t, j] * inv
                d_w[s, t] = acc - rowdot
            for j in range(f):
                dn = d_agg[t, j] * inv
                d_h[t, j] += dn
                for s in range(n):
                    d_h[s, j] += w[s, t] * dn
        return d_h, d_w

    return SimpleNamespace(
        name="numba",
        cosine_weights_fwd=cosine_weights_fwd,
        cosine_weights_bwd=cosine_weights_bwd,
        gcn_aggregate_fwd=gcn_aggregate_fwd,
        gcn_aggregate_bwd=gcn_aggregate_bwd,
    )


def get_kernels(name):
    """Return the kernel namespace for ``name`` ("numpy" or "numba")."""
    global _numba_ns
    if name == "numpy":
        return _NUMPY
    if name == "numba":
        if _numba_ns is None:
            _numba_ns = _build_numba()
        return _numba_ns
    raise ValueError(f"unknown backend {name!r} (expected 'numba' or 'numpy')")


def _resolve_default():
    choice = os.environ.get(_ENV_VAR, "auto").strip().lower() or "auto"
    if choice in ("numpy", "numba"):
        return choice
    if choice != "auto":
        raise ValueError(
            f"{_ENV_VAR}={choice!r} not understood (use 'numba', 'numpy' or 'auto')"
        )
    try:
        import numba  # noqa: F401
    except ImportError:
        return "numpy"
    return "numba"


_active = get_kernels(_resolve_default())


def use(name):
    """Switch the active backend ("numba" or "numpy")."""
    global _active
    _active = get_kernels(name)


def active_backend():
    return _active.name


# Delegating wrappers so call sites stay plain functions while ``use()``
# can still swap the implementation underneath.

def cosine_weights_fwd(x, r):
    """Clamped pairwise cosine weights.

    Returns (w, cos, x_norms, r_norms) where w[s, t] = clip(cos(x[s], r[t]), 0, 1)
    for s != t, the diagonal is 0, and a cosine against a zero vector is 0.
    """
    return _active.cosine_weights_fwd(x, r)


def cosine_weights_bwd(x, r, cos, xn, rn, d_w):
    return _active.cosine_weights_bwd(x, r, cos, xn, rn, d_w)


def gcn_aggregate_fwd(w, h):
    """Incoming-edge weighted mean with a unit self-loop.

    agg[t] = (sum_s w[s, t] * h[s] + h[t]) / (sum_s w[s, t] + 1)
    """
    return _active.gcn_aggregate_fwd(w, h)


def gcn_aggregate_bwd(w, h, agg, denom, d_agg):
    return _active.gcn_aggregate_bwd(w, h, agg, denom, d_agg)
