"""Structure denoising: replace the all-ones edge weights with inferred ones.

The inference runs in three stages. An affinity matrix scores every
(node-channel, sequence-channel) row pair through a bilinear form and
tanh. Reference semantics blend each node's own features with an
affinity-weighted mix of the sequence channel. The new weight of edge
s -> t is the cosine between node s's features and node t's reference,
clamped to [0, 1], so edges pointing at semantically unrelated targets
fade while consistent ones saturate.

The three d x d parameter matrices here form the inner-level partition:
the trainer updates them on their own schedule, separately from the
encoder parameters. Backward passes are closed-form; ``denoise_backward``
returns parameter gradients plus gradients w.r.t. both input channels.
"""

from dataclasses import dataclass

import numpy as np

from . import backend
from .graph import ContentGraph
from .numerics import ParamStore

PHI = ("denoise.w_affinity", "denoise.w_node", "denoise.w_seq")


@dataclass(frozen=True)
class DenoiseParams:
    w_affinity: np.ndarray  # (d, d)
    w_node: np.ndarray      # (d, d)
    w_seq: np.ndarray       # (d, d)

    @classmethod
    def from_store(cls, store: ParamStore) -> "DenoiseParams":
        return cls(store.value(PHI[0]), store.value(PHI[1]), store.value(PHI[2]))

    @property
    def d(self) -> int:
        return self.w_affinity.shape[0]


@dataclass(frozen=True)
class DenoiseOutput:
    affinity: np.ndarray      # (N, N), entries in (-1, 1)
    reference: np.ndarray     # (N, d), entries in (-1, 1)
    edge_weights: np.ndarray  # (N, N) in [0, 1], diagonal 0


def _check_channels(x_node, x_seq, d):
    if x_node.ndim != 2 or x_seq.ndim != 2:
        raise ValueError("channel features must be 2-d matrices")
    if x_node.shape != x_seq.shape:
        raise ValueError(f"channel shapes differ: {x_node.shape} vs {x_seq.shape}")
    if x_node.shape[1] != d:
        raise ValueError(f"feature width {x_node.shape[1]} != parameter width {d}")


def compute_affinity(x_node, x_seq, params: DenoiseParams) -> np.ndarray:
    """tanh(X_node . W_affinity . X_seq^T), one score per ordered node pair."""
    _check_channels(x_node, x_seq, params.d)
    return np.tanh(x_node @ params.w_affinity @ x_seq.T)


def compute_reference(x_node, x_seq, affinity, params: DenoiseParams) -> np.ndarray:
    """tanh(X_node . W_node + affinity . X_seq . W_seq).

    Row t mixes node t's own semantics with sequence-channel rows pulled in
    proportionally to affinity, giving each node a broader-context stand-in
    to be compared against.
    """
    _check_channels(x_node, x_seq, params.d)
    n = x_node.shape[0]
    if affinity.shape != (n, n):
        raise ValueError(f"affinity shape {affinity.shape} != ({n}, {n})")
    return np.tanh(x_node @ params.w_node + affinity @ x_seq @ params.w_seq)


def infer_edge_weights(x_node, reference) -> np.ndarray:
    """w(s -> t) = clip(cos(x_node[s], reference[t]), 0, 1); diagonal 0.

    A cosine involving a zero vector is defined as 0.
    """
    w, _, _, _ = backend.cosine_weights_fwd(
        np.ascontiguousarray(x_node, dtype=np.float64),
        np.ascontiguousarray(reference, dtype=np.float64),
    )
    return w


def denoise_graph(g: ContentGraph, x_seq, params: DenoiseParams):
    """Run the three stages and return (graph with new weights, DenoiseOutput)."""
    affinity = compute_affinity(g.x_node, x_seq, params)
    reference = compute_reference(g.x_node, x_seq, affinity, params)
    weights = infer_edge_weights(g.x_node, reference)
    return g.with_edge_weights(weights), DenoiseOutput(affinity, reference, weights)


@dataclass(frozen=True)
class DenoiseTape:
    """Forward intermediates needed by the backward pass."""

    x_node: np.ndarray
    x_seq: np.ndarray
    affinity: np.ndarray
    reference: np.ndarray
    edge_weights: np.ndarray
    cos: np.ndarray      # unclamped cosines, diagonal 0
    x_norms: np.ndarray  # row norms of x_node
    r_norms: np.ndarray  # row norms of reference


def denoise_forward(x_node, x_seq, params: DenoiseParams) -> DenoiseTape:
    affinity = compute_affinity(x_node, x_seq, params)
    reference = compute_reference(x_node, x_seq, affinity, params)
    x64 = np.ascontiguousarray(x_node, dtype=np.float64)
    r64 = np.ascontiguousarray(reference, dtype=np.float64)
    w, cos, xn, rn = backend.cosine_weights_fwd(x64, r64)
    return DenoiseTape(x64, np.asarray(x_seq, dtype=np.float64), affinity, reference, w, cos, xn, rn)


def denoise_backward(tape: DenoiseTape, params: DenoiseParams, d_weights):
    """Vector-Jacobian product of denoise_forward.

    Given d(loss)/d(edge_weights), returns (grads, d_x_node, d_x_seq) with
    ``grads`` keyed by the names in PHI. The clamp contributes zero
    gradient at and beyond its boundaries.
    """
    d_x_cos, d_ref = backend.cosine_weights_bwd(
        tape.x_node, tape.reference, tape.cos, tape.x_norms, tape.r_norms,
        np.ascontiguousarray(d_weights, dtype=np.float64),
    )
    # through reference = tanh(u), u = x_node.w_node + affinity.x_seq.w_seq
    du = d_ref * (1.0 - tape.reference ** 2)
    g_node = tape.x_node.T @ du
    d_x_node = d_x_cos + du @ params.w_node.T
    mixed = tape.x_seq @ params.w_seq              # (N, d)
    d_affinity = du @ mixed.T
    d_mixed = tape.affinity.T @ du
    g_seq = tape.x_seq.T @ d_mixed
    d_x_seq = d_mixed @ params.w_seq.T
    # through affinity = tanh(z), z = x_node.w_affinity.x_seq^T
    dz = d_affinity * (1.0 - tape.affinity ** 2)
    g_affinity = tape.x_node.T @ dz @ tape.x_seq
    d_x_node += dz @ tape.x_seq @ params.w_affinity.T
    d_x_seq += dz.T @ tape.x_node @ params.w_affinity
    grads = {PHI[0]: g_affinity, PHI[1]: g_node, PHI[2]: g_seq}
    return grads, d_x_node, d_x_seq
