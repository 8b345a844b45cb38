"""Compiled forward and backward sweeps over a stack of subtopologies.

The master topology is flattened into integer tables once. The kernels loop
over subtopologies, then units, with the innermost loop running over samples
so it vectorises. Units that are disabled in a subtopology are skipped, and
so are zero weights; trained subtopologies are sparse, which is where most
of the speed comes from.

Buffers are unit-major: ``Y[p]`` has one row per value (the model inputs,
then every layer's outputs, learnable units before copy units) and ``Z[p]``
one row per z-node of every layer back to back.
"""

from __future__ import annotations

import numba as nb
import numpy as np

KIND_CODES = {"identity": 0, "sin": 1, "cos": 2, "tanh": 3, "arctan": 4,
              "cube": 5, "multiply": 6, "divide": 7}


class CompiledMaster:
    """Integer tables describing a master topology for the kernels."""

    def __init__(self, master):
        d = master.input_dim
        n_layers = len(master.layers)
        self.l_nin = np.zeros(n_layers, np.int64)
        self.l_yin = np.zeros(n_layers, np.int64)
        self.l_yout = np.zeros(n_layers, np.int64)
        self.l_nlearn = np.zeros(n_layers, np.int64)
        self.l_ncopy = np.zeros(n_layers, np.int64)
        self.l_soff = np.zeros(n_layers, np.int64)
        self.l_u0 = np.zeros(n_layers + 1, np.int64)
        self.l_zoff = np.zeros(n_layers, np.int64)
        kinds, rows, zidx, yidx, starts = [], [], [], [], []
        y_in, z_off = 0, 0
        y_out = d
        for li, L in enumerate(master.layers):
            self.l_nin[li] = L.n_in
            self.l_yin[li] = y_in
            self.l_yout[li] = y_out
            self.l_nlearn[li] = L.n_learn
            self.l_ncopy[li] = L.n_copy
            self.l_soff[li] = L.skip_offset
            self.l_u0[li] = len(kinds)
            self.l_zoff[li] = z_off
            for pos, kind in enumerate(L.kinds):
                kinds.append(KIND_CODES[kind.value])
                row = L.param_offset + int(L.z_offsets[pos]) * L.row_len
                rows.append(row)
                starts.append(row)
                zidx.append(z_off + int(L.z_offsets[pos]))
                yidx.append(y_out + pos)
            y_in = y_out
            y_out += L.n_out
            z_off += L.n_z
        self.l_u0[n_layers] = len(kinds)
        self.u_kind = np.asarray(kinds, np.int64)
        self.u_row = np.asarray(rows, np.int64)
        self.u_z = np.asarray(zidx, np.int64)
        self.u_y = np.asarray(yidx, np.int64)
        self.unit_starts = np.asarray(starts, np.intp)
        self.n_y = y_out
        self.n_z = z_off
        self.out_y = y_out - 1
        # divide units: (layer index, position, global z index of the denominator)
        self.divides = [(li, pos, z_off_l + int(L.z_last[pos]))
                        for li, (L, z_off_l) in enumerate(zip(master.layers, self.l_zoff))
                        for pos, kind in enumerate(L.kinds) if kind.value == "divide"]
        # row of the direct z-sensitivity buffer for each z-node, or -1
        self.dz_slot = np.full(self.n_z, -1, np.int64)
        for k, (_, _, zg) in enumerate(self.divides):
            self.dz_slot[zg] = k

    def tables(self):
        return (self.l_nin, self.l_yin, self.l_yout, self.l_nlearn, self.l_ncopy,
                self.l_soff, self.l_u0, self.u_kind, self.u_row, self.u_z, self.u_y)

    def unit_enabled(self, M: np.ndarray) -> np.ndarray:
        """Per learnable unit: does any of its weights have its enable flag set?"""
        return np.logical_or.reduceat(M != 0, self.unit_starts, axis=1)


def compiled(master) -> CompiledMaster:
    cm = master.__dict__.get("_compiled")
    if cm is None:
        cm = CompiledMaster(master)
        master.__dict__["_compiled"] = cm
    return cm


_opts = dict(cache=True, nogil=True, fastmath=False, error_model="numpy")

# Above this magnitude the two-constant argument reduction loses accuracy and
# the kernels fall back to libm.
_TRIG_SAFE = 1e5


@nb.njit(**_opts)
def _sin_phase(a, out, phase):
    """``out = sin(a + phase * pi / 2)`` for ``phase`` in 0..3.

    Quadrant reduction followed by the classic minimax kernels on
    ``[-pi/4, pi/4]``; branch-free in the loop body so it vectorises.
    """
    big = False
    for n in range(a.shape[0]):
        if abs(a[n]) > _TRIG_SAFE:
            big = True
    if big:
        for n in range(a.shape[0]):
            x = a[n]
            if phase == 0:
                out[n] = np.sin(x)
            elif phase == 1:
                out[n] = np.cos(x)
            elif phase == 2:
                out[n] = -np.sin(x)
            else:
                out[n] = -np.cos(x)
        return
    for n in range(a.shape[0]):
        x = a[n]
        k = np.floor(x * 0.6366197723675814 + 0.5)
        r = ((x - k * 1.57079632673412561417e+00) - k * 6.07710050630396597660e-11) \
            - k * 2.02226624871116645580e-21
        z = r * r
        s = r + r * z * (-1.66666666666666324348e-01 + z * (8.33333333332248946124e-03 + z * (
            -1.98412698298579493134e-04 + z * (2.75573137070700676789e-06 + z * (
                -2.50507602534068634195e-08 + z * 1.58969099521155010221e-10)))))
        c = 1.0 - 0.5 * z + z * z * (4.16666666666666019037e-02 + z * (-1.38888888888741095749e-03 + z * (
            2.48015872894767294178e-05 + z * (-2.75573143513906633035e-07 + z * (
                2.08757232129817482790e-09 + z * -1.13596475577881948265e-11)))))
        q = (np.int64(k) + phase) & 3
        v = s if (q & 1) == 0 else c
        out[n] = v if q < 2 else -v


@nb.njit(**_opts)
def forward_kernel(W, S, EN, XT, theta, l_nin, l_yin, l_yout, l_nlearn, l_ncopy, l_soff,
                   l_u0, u_kind, u_row, u_z, u_y, Z, Y):
    P = W.shape[0]
    d, N = XT.shape
    n_layers = l_nin.shape[0]
    for p in range(P):
        y = Y[p]
        z = Z[p]
        y[:d] = XT
        for li in range(n_layers):
            nin = l_nin[li]
            yin = l_yin[li]
            for u in range(l_u0[li], l_u0[li + 1]):
                kind = u_kind[u]
                zi = u_z[u]
                yo = y[u_y[u]]
                arity = 2 if kind >= 6 else 1
                if not EN[p, u]:
                    yo[:] = 0.0
                    for r in range(arity):
                        z[zi + r, :] = 0.0
                    continue
                for r in range(arity):
                    row = u_row[u] + r * (nin + 1)
                    zr = z[zi + r]
                    zr[:] = W[p, row + nin]
                    for j in range(nin):
                        w = W[p, row + j]
                        if w != 0.0:
                            src = y[yin + j]
                            for n in range(N):
                                zr[n] += w * src[n]
                a = z[zi]
                if kind == 0:
                    yo[:] = a
                elif kind == 1:
                    _sin_phase(a, yo, 0)
                elif kind == 2:
                    _sin_phase(a, yo, 1)
                elif kind == 3:
                    for n in range(N):
                        yo[n] = np.tanh(a[n])
                elif kind == 4:
                    for n in range(N):
                        yo[n] = np.arctan(a[n])
                elif kind == 5:
                    for n in range(N):
                        yo[n] = a[n] * a[n] * a[n]
                elif kind == 6:
                    b = z[zi + 1]
                    for n in range(N):
                        yo[n] = a[n] * b[n]
                else:
                    b = z[zi + 1]
                    for n in range(N):
                        yo[n] = a[n] / b[n] if b[n] > theta else 0.0
            ncopy = l_ncopy[li]
            if ncopy:
                base = l_yout[li] + l_nlearn[li]
                soff = l_soff[li]
                for c in range(ncopy):
                    sk = S[p, soff + c]
                    dst = y[base + c]
                    if sk == 0.0:
                        dst[:] = 0.0
                    else:
                        src = y[yin + c]
                        for n in range(N):
                            dst[n] = src[n] * sk


@nb.njit(**_opts)
def backward_kernel(W, S, EN, Z, Y, DOUT, DZ, dz_slot, theta, out_y, l_nin, l_yin, l_yout,
                    l_nlearn, l_ncopy, l_soff, l_u0, u_kind, u_row, u_z, u_y, G):
    P = W.shape[0]
    n_y, N = Y.shape[1], Y.shape[2]
    n_layers = l_nin.shape[0]
    dy = np.zeros((n_y, N))
    dz = np.empty((2, N))
    live = np.zeros(n_y, np.bool_)
    for p in range(P):
        y = Y[p]
        z = Z[p]
        live[:] = False
        dy[out_y, :] = DOUT[p]
        live[out_y] = True
        for li in range(n_layers - 1, -1, -1):
            nin = l_nin[li]
            yin = l_yin[li]
            ncopy = l_ncopy[li]
            for j in range(nin):
                live[yin + j] = False
                dy[yin + j, :] = 0.0
            if ncopy:
                base = l_yout[li] + l_nlearn[li]
                soff = l_soff[li]
                for c in range(ncopy):
                    sk = S[p, soff + c]
                    if sk != 0.0 and live[base + c]:
                        live[yin + c] = True
                        src = dy[base + c]
                        dst = dy[yin + c]
                        for n in range(N):
                            dst[n] += src[n] * sk
            for u in range(l_u0[li], l_u0[li + 1]):
                if not EN[p, u]:
                    continue
                kind = u_kind[u]
                zi = u_z[u]
                uy = u_y[u]
                arity = 2 if kind >= 6 else 1
                if live[uy]:
                    g = dy[uy]
                    a = z[zi]
                    if kind == 0:
                        dz[0, :] = g
                    elif kind == 1 or kind == 2:
                        d0 = dz[0]
                        _sin_phase(a, d0, kind)  # sin' = cos, cos' = -sin
                        for n in range(N):
                            d0[n] *= g[n]
                    elif kind == 3:
                        t = y[uy]
                        for n in range(N):
                            dz[0, n] = g[n] * (1.0 - t[n] * t[n])
                    elif kind == 4:
                        for n in range(N):
                            dz[0, n] = g[n] / (1.0 + a[n] * a[n])
                    elif kind == 5:
                        for n in range(N):
                            dz[0, n] = g[n] * 3.0 * a[n] * a[n]
                    elif kind == 6:
                        b = z[zi + 1]
                        for n in range(N):
                            dz[0, n] = g[n] * b[n]
                            dz[1, n] = g[n] * a[n]
                    else:
                        b = z[zi + 1]
                        for n in range(N):
                            if b[n] > theta:
                                inv = 1.0 / b[n]
                                dz[0, n] = g[n] * inv
                                dz[1, n] = -g[n] * a[n] * inv * inv
                            else:
                                dz[0, n] = 0.0
                                dz[1, n] = 0.0
                elif dz_slot[zi + arity - 1] >= 0:
                    dz[:, :] = 0.0
                else:
                    continue
                for r in range(arity):
                    dzr = dz[r]
                    slot = dz_slot[zi + r]
                    if slot >= 0:
                        extra = DZ[p, slot]
                        for n in range(N):
                            dzr[n] += extra[n]
                    row = u_row[u] + r * (nin + 1)
                    acc = 0.0
                    for n in range(N):
                        acc += dzr[n]
                    G[p, row + nin] += acc
                    for j in range(nin):
                        src = y[yin + j]
                        acc = 0.0
                        for n in range(N):
                            acc += dzr[n] * src[n]
                        G[p, row + j] += acc
                        w = W[p, row + j]
                        if w != 0.0 and li > 0:
                            live[yin + j] = True
                            dst = dy[yin + j]
                            for n in range(N):
                                dst[n] += dzr[n] * w
