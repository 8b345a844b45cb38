"""Forward evaluation and reverse-mode gradients for subtopologies.

The network structure is fixed by the master topology, so backpropagation is
written out layer by layer instead of going through a general computation
graph. Every routine works on a *stack* of subtopologies: weights shaped
``(P, n_params)`` and skip bits shaped ``(P, n_skip)``; a single subtopology
is the ``P == 1`` case. Batching the population this way amortises the numpy
call overhead, which dominates at these network sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import backward_kernel, compiled, forward_kernel
from .topology import MasterTopology, Subtopology

DEFAULT_THETA_DIV = 1e-3

@dataclass
class StackTrace:
    """Cached forward pass of a stack, enough to run the backward pass."""

    z: np.ndarray  # (P, n_z, N) every z-node of every layer
    y: np.ndarray  # (P, n_y, N) inputs followed by every unit output
    output: np.ndarray  # (P, N), non-finite entries zeroed
    bad: np.ndarray  # (P, N) samples whose raw output was not finite
    enabled: np.ndarray  # (P, n_learnable_units)

    def layer_z(self, master, li):
        cm = compiled(master)
        return self.z[:, cm.l_zoff[li]:cm.l_zoff[li] + master.layers[li].n_z]

    def layer_y(self, master, li):
        cm = compiled(master)
        return self.y[:, cm.l_yout[li]:cm.l_yout[li] + master.layers[li].n_out]


def _stack_args(W, S, M):
    W = np.ascontiguousarray(W, dtype=float)
    S = np.ascontiguousarray(S, dtype=float)
    if M is None:
        M = W != 0.0
    return W, S, M


def forward_stack(master: MasterTopology, W: np.ndarray, S: np.ndarray, X: np.ndarray,
                  theta_div: float = DEFAULT_THETA_DIV, M: np.ndarray | None = None) -> StackTrace:
    """Evaluate a stack of subtopologies on every row of ``X``.

    ``M`` is the stack of enable masks; units without any enabled weight
    output 0. When omitted, nonzero weights stand in for the mask.
    """
    W, S, M = _stack_args(W, S, M)
    XT = np.ascontiguousarray(np.asarray(X, dtype=float).T)
    cm = compiled(master)
    P, N = W.shape[0], XT.shape[1]
    EN = cm.unit_enabled(M)
    Z = np.empty((P, cm.n_z, N))
    Y = np.empty((P, cm.n_y, N))
    forward_kernel(W, S, EN, XT, float(theta_div), *cm.tables(), Z, Y)
    out = Y[:, cm.out_y, :]
    bad = ~np.isfinite(out)
    out = np.where(bad, 0.0, out)
    return StackTrace(Z, Y, out, bad, EN)


def backward_stack(master: MasterTopology, W: np.ndarray, S: np.ndarray, trace: StackTrace,
                   d_out: np.ndarray, d_div: np.ndarray | None = None,
                   theta_div: float = DEFAULT_THETA_DIV) -> np.ndarray:
    """Gradient of a scalar loss per stack row w.r.t. every weight.

    ``d_out`` is dL/d(output) shaped ``(P, N)``; ``d_div`` optionally adds
    direct loss sensitivities to the divide denominators, shaped
    ``(P, n_divide_units, N)`` in master order. Samples
    flagged non-finite in the trace never propagate gradient.
    """
    W = np.ascontiguousarray(W, dtype=float)
    S = np.ascontiguousarray(S, dtype=float)
    cm = compiled(master)
    any_bad = trace.bad.any()
    if any_bad:
        d_out = np.where(trace.bad, 0.0, d_out)
    d_out = np.ascontiguousarray(d_out, dtype=float)
    if d_div is None:
        d_div = np.zeros((W.shape[0], 0, trace.y.shape[2]))
        dz_slot = np.full(cm.n_z, -1, np.int64)
    else:
        if any_bad:
            d_div = np.where(trace.bad[:, None, :], 0.0, d_div)
        d_div = np.ascontiguousarray(d_div, dtype=float)
        dz_slot = cm.dz_slot
    G = np.zeros((W.shape[0], master.n_params))
    (l_nin, l_yin, l_yout, l_nlearn, l_ncopy, l_soff, l_u0,
     u_kind, u_row, u_z, u_y) = cm.tables()
    backward_kernel(W, S, trace.enabled, trace.z, trace.y, d_out, d_div, dz_slot, float(theta_div),
                    cm.out_y, l_nin, l_yin, l_yout, l_nlearn, l_ncopy, l_soff, l_u0,
                    u_kind, u_row, u_z, u_y, G)
    return G


# ---------------------------------------------------------------------------
# Single-subtopology API
# ---------------------------------------------------------------------------


@dataclass
class ForwardTrace:
    """Forward pass of one subtopology on one input vector."""

    z: list  # per hidden/output layer: z-node values
    y: list  # per layer: unit outputs (learnable then copy)
    output: float
    singularity: dict  # (layer, pos) of each divide unit -> penalty max(0, theta - z1)


def forward(sub: Subtopology, x, theta_div: float = DEFAULT_THETA_DIV) -> ForwardTrace:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != sub.master.input_dim:
        raise ValueError(f"expected {sub.master.input_dim} inputs, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input component")
    master = sub.master
    tr = forward_stack(master, sub.weights[None], sub.skip[None], x[None], theta_div, sub.mask[None])
    cm = compiled(master)
    penalties = {}
    for li, pos, zg in cm.divides:
        penalties[(master.layers[li].index, pos)] = float(max(0.0, theta_div - tr.z[0, zg, 0]))
    return ForwardTrace(
        z=[tr.layer_z(master, li)[0, :, 0].copy() for li in range(len(master.layers))],
        y=[tr.layer_y(master, li)[0, :, 0].copy() for li in range(len(master.layers))],
        output=float(tr.y[0, cm.out_y, 0]),
        singularity=penalties,
    )


def predict(sub: Subtopology, X, theta_div: float = DEFAULT_THETA_DIV) -> np.ndarray:
    """Model output on a batch of inputs; non-finite outputs come back as nan."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return predict_stack(sub.master, sub.weights[None], sub.skip[None], X, theta_div, sub.mask[None])[0]


def predict_stack(master, W, S, X, theta_div: float = DEFAULT_THETA_DIV, M=None) -> np.ndarray:
    tr = forward_stack(master, W, S, X, theta_div, M)
    out = tr.output.copy()
    out[tr.bad] = np.nan
    return out


def gradients(sub: Subtopology, kind, data, settings=None) -> np.ndarray:
    """dL/dw for the enabled learnable weights of ``sub`` (in flat order).

    Disabled weights have no entry; use ``np.flatnonzero(sub.mask)`` to map
    entries back to flat weight indices.
    """
    from .losses import LossSettings, value_and_grad

    settings = settings or LossSettings()
    losses, G = value_and_grad(sub.master, sub.weights[None], sub.skip[None], sub.mask[None],
                               data, kind, settings)
    if not np.isfinite(losses.total[0]):
        raise FloatingPointError("non-finite loss")
    return G[0][sub.mask]
