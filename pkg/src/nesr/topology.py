"""Master topology template and the subtopology data model.

A master topology is a stack of hidden layers followed by a single identity
output unit. Every hidden layer after the first also contains one copy unit
per output of the previous layer, so shallow structures can be routed to the
output through binary skip connections.

All learnable weights of a subtopology live in one flat vector. Each layer
owns a contiguous block laid out row-major as ``(n_z, n_in + 1)``: one row per
z-node, one column per previous-layer output and a trailing bias column.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

DEFAULT_INIT_BOUND = 0.5
DEFAULT_THETA_A = 0.01


class ActivationKind(str, Enum):
    IDENTITY = "identity"
    SIN = "sin"
    COS = "cos"
    TANH = "tanh"
    ARCTAN = "arctan"
    CUBE = "cube"
    MULTIPLY = "multiply"
    DIVIDE = "divide"

    @property
    def arity(self) -> int:
        return 2 if self in (ActivationKind.MULTIPLY, ActivationKind.DIVIDE) else 1

    @property
    def singular(self) -> bool:
        return self is ActivationKind.DIVIDE

    @classmethod
    def parse(cls, name) -> "ActivationKind":
        if isinstance(name, ActivationKind):
            return name
        key = str(name).strip().lower()
        key = _ALIASES.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown activation kind {name!r}") from None


_ALIASES = {
    "ident": "identity",
    "id": "identity",
    "*": "multiply",
    "mul": "multiply",
    "mult": "multiply",
    "/": "divide",
    "div": "divide",
    "atan": "arctan",
}


@dataclass(frozen=True)
class UnitSpec:
    kind: ActivationKind
    role: str  # "learnable" or "copy"
    copy_source: int | None = None

    @property
    def is_copy(self) -> bool:
        return self.role == "copy"


@dataclass
class LayerLayout:
    """Index bookkeeping for one layer (hidden or output)."""

    index: int  # 1-based; the output layer is n_hidden + 1
    kinds: tuple  # learnable unit kinds, in position order
    n_in: int
    n_copy: int
    param_offset: int
    skip_offset: int
    z_offsets: np.ndarray = field(repr=False)  # first z row of each learnable unit
    z_last: np.ndarray = field(repr=False)  # last z row of each learnable unit
    unit_of_z: np.ndarray = field(repr=False)  # owning learnable unit of each z row
    groups: dict = field(repr=False)  # kind -> (unit idx, z0 idx[, z1 idx])

    @property
    def n_learn(self) -> int:
        return len(self.kinds)

    @property
    def n_units(self) -> int:
        return self.n_learn + self.n_copy

    @property
    def n_out(self) -> int:
        return self.n_units

    @property
    def n_z(self) -> int:
        return len(self.unit_of_z)

    @property
    def row_len(self) -> int:
        return self.n_in + 1

    @property
    def n_params(self) -> int:
        return self.n_z * self.row_len

    def unit_param_slice(self, pos: int) -> slice:
        if pos >= self.n_learn:
            raise ValueError(f"unit {pos} of layer {self.index} is a copy unit")
        start = self.param_offset + int(self.z_offsets[pos]) * self.row_len
        arity = self.kinds[pos].arity
        return slice(start, start + arity * self.row_len)


class MasterTopology:
    """Structural template shared by every subtopology of a run.

    Parameters
    ----------
    input_dim : int
        Number of model inputs.
    hidden : sequence of sequences
        Learnable unit kinds per hidden layer. Copy units are inserted
        automatically for every hidden layer after the first.
    name : str, optional
        Label used in reports.
    """

    def __init__(self, input_dim: int, hidden, name: str = "custom"):
        if input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        hidden = [tuple(ActivationKind.parse(k) for k in layer) for layer in hidden]
        if not hidden:
            raise ValueError("a master topology needs at least one hidden layer")
        if any(len(layer) == 0 for layer in hidden):
            raise ValueError("hidden layers must contain at least one learnable unit")
        self.input_dim = int(input_dim)
        self.hidden = tuple(hidden)
        self.name = name

        layouts = []
        param_offset = 0
        skip_offset = 0
        n_prev = self.input_dim
        for j, kinds in enumerate(self.hidden + ((ActivationKind.IDENTITY,),), start=1):
            is_output = j == len(self.hidden) + 1
            n_copy = 0 if (j == 1 or is_output) else n_prev
            layout = _make_layout(j, kinds, n_prev, n_copy, param_offset, skip_offset)
            layouts.append(layout)
            param_offset += layout.n_params
            skip_offset += n_copy
            n_prev = layout.n_out
        self.layers: tuple[LayerLayout, ...] = tuple(layouts)
        self.n_params = param_offset
        self.n_skip = skip_offset

    # -- structure queries -------------------------------------------------

    @property
    def n_hidden(self) -> int:
        return len(self.hidden)

    @property
    def output_layer(self) -> LayerLayout:
        return self.layers[-1]

    def layer(self, j: int) -> LayerLayout:
        return self.layers[j - 1]

    def unit_spec(self, addr) -> UnitSpec:
        j, pos = addr
        layout = self._check_addr(addr)
        if pos < layout.n_learn:
            return UnitSpec(layout.kinds[pos], "learnable")
        return UnitSpec(ActivationKind.IDENTITY, "copy", pos - layout.n_learn)

    def units(self):
        """All unit addresses, layer by layer, including the output unit."""
        return [(L.index, p) for L in self.layers for p in range(L.n_units)]

    def learnable_units(self, include_output: bool = True):
        out = [(L.index, p) for L in self.layers for p in range(L.n_learn)]
        if not include_output:
            out = [a for a in out if a[0] != self.output_layer.index]
        return out

    def copy_units(self):
        return [(L.index, p) for L in self.layers for p in range(L.n_learn, L.n_units)]

    def is_copy(self, addr) -> bool:
        layout = self._check_addr(addr)
        return addr[1] >= layout.n_learn

    def skip_index(self, addr) -> int:
        layout = self._check_addr(addr)
        if addr[1] < layout.n_learn:
            raise ValueError(f"unit {addr} is not a copy unit")
        return layout.skip_offset + addr[1] - layout.n_learn

    def unit_param_slice(self, addr) -> slice:
        layout = self._check_addr(addr)
        return layout.unit_param_slice(addr[1])

    def _check_addr(self, addr) -> LayerLayout:
        j, pos = addr
        if not 1 <= j <= len(self.layers):
            raise IndexError(f"layer {j} out of range")
        layout = self.layers[j - 1]
        if not 0 <= pos < layout.n_units:
            raise IndexError(f"unit position {pos} out of range in layer {j}")
        return layout

    # -- identity ----------------------------------------------------------

    def to_spec(self) -> dict:
        return {
            "name": self.name,
            "input_dim": self.input_dim,
            "hidden": [[k.value for k in layer] for layer in self.hidden],
        }

    @classmethod
    def from_spec(cls, spec: dict) -> "MasterTopology":
        return cls(spec["input_dim"], spec["hidden"], name=spec.get("name", "custom"))

    @property
    def spec_hash(self) -> str:
        payload = json.dumps({"input_dim": self.input_dim,
                              "hidden": self.to_spec()["hidden"]}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def __eq__(self, other):
        return isinstance(other, MasterTopology) and (
            self.input_dim == other.input_dim and self.hidden == other.hidden)

    def __hash__(self):
        return hash((self.input_dim, self.hidden))

    def __repr__(self):
        sizes = "/".join(str(L.n_learn) for L in self.layers[:-1])
        return f"MasterTopology({self.name!r}, input_dim={self.input_dim}, learnable={sizes})"


def _as_slice(idx: np.ndarray):
    """Evenly spaced indices as a slice (so numpy returns views), else the array."""
    if len(idx) == 1:
        return slice(int(idx[0]), int(idx[0]) + 1)
    step = np.diff(idx)
    if len(idx) and step[0] > 0 and np.all(step == step[0]):
        return slice(int(idx[0]), int(idx[-1]) + 1, int(step[0]))
    return idx


def _make_layout(j, kinds, n_in, n_copy, param_offset, skip_offset) -> LayerLayout:
    z_offsets = []
    unit_of_z = []
    for pos, kind in enumerate(kinds):
        z_offsets.append(len(unit_of_z))
        unit_of_z.extend([pos] * kind.arity)
    z_offsets = np.asarray(z_offsets, dtype=np.intp)
    groups = {}
    for kind in dict.fromkeys(kinds):
        units = np.array([p for p, k in enumerate(kinds) if k is kind], dtype=np.intp)
        if kind.arity == 1:
            groups[kind] = (_as_slice(units), _as_slice(z_offsets[units]))
        else:
            groups[kind] = (_as_slice(units), _as_slice(z_offsets[units]), _as_slice(z_offsets[units] + 1))
    return LayerLayout(
        index=j, kinds=tuple(kinds), n_in=n_in, n_copy=n_copy,
        param_offset=param_offset, skip_offset=skip_offset,
        z_offsets=z_offsets, z_last=z_offsets + np.array([k.arity - 1 for k in kinds], dtype=np.intp),
        unit_of_z=np.asarray(unit_of_z, dtype=np.intp),
        groups=groups,
    )


def build_master(spec) -> MasterTopology:
    """Build a master topology from a preset name or a spec mapping.

    The mapping form is ``{"input_dim": n, "hidden": [[kind, ...], ...]}``.
    Preset names are ``mastera``, ``masterb`` and ``quadcopter``; a preset
    needs ``input_dim`` passed as ``{"preset": name, "input_dim": n}``.
    """
    if isinstance(spec, MasterTopology):
        return spec
    if "preset" in spec:
        return preset_master(spec["preset"], spec["input_dim"])
    return MasterTopology.from_spec(spec)


def preset_master(name: str, input_dim: int) -> MasterTopology:
    base = {
        "mastera": ["sin", "tanh", "identity", "multiply"],
        "masterb": ["sin", "arctan", "identity", "multiply"],
    }
    if name in base:
        layer = [k for k in base[name] for _ in range(2)]
        return MasterTopology(input_dim, [layer, layer, layer + ["divide"]], name=name)
    if name == "quadcopter":
        layer = ["sin", "cos", "identity", "identity", "multiply", "multiply"]
        return MasterTopology(input_dim, [layer, layer], name=name)
    raise ValueError(f"unknown master topology preset {name!r}")


# ---------------------------------------------------------------------------
# Subtopology
# ---------------------------------------------------------------------------


class AdamState:
    """First/second moment accumulators aligned with the flat weight vector."""

    def __init__(self, n_params: int):
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def reset(self, idx=slice(None)):
        self.m[idx] = 0.0
        self.v[idx] = 0.0

    def copy(self) -> "AdamState":
        out = AdamState.__new__(AdamState)
        out.m = self.m.copy()
        out.v = self.v.copy()
        out.t = self.t
        return out


class Subtopology:
    """One candidate model carved out of a master topology."""

    def __init__(self, master: MasterTopology, weights=None, mask=None, skip=None):
        self.master = master
        self.weights = np.zeros(master.n_params) if weights is None else np.asarray(weights, dtype=float).copy()
        self.mask = np.ones(master.n_params, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).copy()
        self.skip = np.ones(master.n_skip) if skip is None else np.asarray(skip, dtype=float).copy()
        if self.weights.shape != (master.n_params,) or self.mask.shape != self.weights.shape:
            raise ValueError("weight/mask vectors do not match the master topology")
        if self.skip.shape != (master.n_skip,):
            raise ValueError("skip vector does not match the master topology")
        self.weights[~self.mask] = 0.0
        self.adam = AdamState(master.n_params)
        self.fitness = None
        self.uid = -1  # lineage tag set by the evolutionary driver

    def layer_weights(self, j: int) -> np.ndarray:
        """View of layer ``j`` weights shaped ``(n_z, n_in + 1)``."""
        L = self.master.layer(j)
        return self.weights[L.param_offset:L.param_offset + L.n_params].reshape(L.n_z, L.row_len)

    def layer_mask(self, j: int) -> np.ndarray:
        L = self.master.layer(j)
        return self.mask[L.param_offset:L.param_offset + L.n_params].reshape(L.n_z, L.row_len)

    def layer_skip(self, j: int) -> np.ndarray:
        L = self.master.layer(j)
        return self.skip[L.skip_offset:L.skip_offset + L.n_copy]

    def unit_weights(self, addr) -> np.ndarray:
        """z-node weight rows (with bias) of a learnable unit, shaped ``(arity, n_in + 1)``."""
        sl = self.master.unit_param_slice(addr)
        L = self.master.layer(addr[0])
        return self.weights[sl].reshape(-1, L.row_len)

    def unit_enabled(self, addr) -> bool:
        if self.master.is_copy(addr):
            return bool(self.skip[self.master.skip_index(addr)] != 0)
        return bool(self.mask[self.master.unit_param_slice(addr)].any())

    @property
    def enabled_units(self) -> dict:
        return {a: self.unit_enabled(a) for a in self.master.units()}

    def invalidate(self):
        self.fitness = None

    def copy(self) -> "Subtopology":
        out = Subtopology.__new__(Subtopology)
        out.master = self.master
        out.weights = self.weights.copy()
        out.mask = self.mask.copy()
        out.skip = self.skip.copy()
        out.adam = self.adam.copy()
        out.fitness = self.fitness
        out.uid = self.uid
        return out

    def check_invariants(self):
        if np.any(self.weights[~self.mask] != 0.0):
            raise AssertionError("disabled link with nonzero weight")
        if not np.all((self.skip == 0.0) | (self.skip == 1.0)):
            raise AssertionError("skip weight outside {0, 1}")

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "master": self.master.to_spec(),
            "master_hash": self.master.spec_hash,
            "weights": self.weights.tolist(),
            "mask": self.mask.astype(int).tolist(),
            "skip": self.skip.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Subtopology":
        master = MasterTopology.from_spec(doc["master"])
        if doc.get("master_hash", master.spec_hash) != master.spec_hash:
            raise ValueError("checkpoint master hash does not match its master spec")
        return cls(master, doc["weights"], np.asarray(doc["mask"], dtype=bool), doc["skip"])

    def __repr__(self):
        act = activity_analysis(self)
        return (f"Subtopology({self.master.name}, units={act.n_active_units}, "
                f"links={act.n_active_links})")


def random_unit_weights(master: MasterTopology, addr, rng, bound=DEFAULT_INIT_BOUND) -> np.ndarray:
    sl = master.unit_param_slice(addr)
    return rng.uniform(-bound, bound, size=sl.stop - sl.start)


def init_subtopology(master: MasterTopology, rng, bound: float = DEFAULT_INIT_BOUND) -> Subtopology:
    """Fresh subtopology: everything enabled, skips at 1, uniform weights."""
    weights = rng.uniform(-bound, bound, size=master.n_params)
    return Subtopology(master, weights)


# ---------------------------------------------------------------------------
# Activity
# ---------------------------------------------------------------------------


@dataclass
class ActivitySet:
    active_units: set
    active_links: set
    n_active_units: int
    n_active_links: int

    @property
    def complexity(self) -> tuple:
        return (self.n_active_units, self.n_active_links)


def activity_masks(master: MasterTopology, weights: np.ndarray, skip: np.ndarray):
    """Vectorised activity analysis over a stack of subtopologies.

    ``weights`` is ``(P, n_params)`` and ``skip`` is ``(P, n_skip)``. A unit
    is *fed* when a nonzero input link reaches it from a model input through
    fed units; it is *active* when it is fed and a nonzero path leads from it
    to the output. Returns per-layer boolean arrays and the flat mask of
    active learnable links.
    """
    P = weights.shape[0]
    nz_layers = []
    fed_units = []
    fed_prev = np.ones((P, master.input_dim), dtype=bool)
    for L in master.layers:
        nz = weights[:, L.param_offset:L.param_offset + L.n_params].reshape(P, L.n_z, L.row_len) != 0.0
        nz_layers.append(nz)
        z_fed = np.any(nz[:, :, :-1] & fed_prev[:, None, :], axis=2)
        fed_learn = z_fed[:, L.z_offsets] | z_fed[:, L.z_last]
        if L.n_copy:
            on = skip[:, L.skip_offset:L.skip_offset + L.n_copy] != 0.0
            fed = np.concatenate([fed_learn, on & fed_prev], axis=1)
        else:
            fed = fed_learn
        fed_units.append(fed)
        fed_prev = fed

    active_units = [None] * len(master.layers)
    link_masks = [None] * len(master.layers)
    # output unit: active iff fed
    needed = np.ones((P, 1), dtype=bool)
    for li in range(len(master.layers) - 1, -1, -1):
        L = master.layers[li]
        act = fed_units[li] & needed
        active_units[li] = act
        src_fed = fed_units[li - 1] if li > 0 else np.ones((P, master.input_dim), dtype=bool)
        row_active = act[:, :L.n_learn][:, L.unit_of_z]  # (P, n_z)
        nz = nz_layers[li]
        links = np.empty_like(nz)
        links[:, :, :-1] = nz[:, :, :-1] & src_fed[:, None, :] & row_active[:, :, None]
        links[:, :, -1] = nz[:, :, -1] & row_active
        link_masks[li] = links
        if li > 0:
            needed = np.any(links[:, :, :-1], axis=1)
            if L.n_copy:
                needed = needed | act[:, L.n_learn:]
    flat_links = np.concatenate([m.reshape(P, -1) for m in link_masks], axis=1)
    return fed_units, active_units, link_masks, flat_links


def activity_analysis(sub: Subtopology) -> ActivitySet:
    """Active units and links of one subtopology.

    Bias links are counted only for active units (which, by construction,
    carry at least one active input link). Active copy units contribute
    their skip link.
    """
    master = sub.master
    _, active_units, link_masks, _ = activity_masks(master, sub.weights[None], sub.skip[None])
    units = set()
    links = set()
    for L, act, lm in zip(master.layers, active_units, link_masks):
        for pos in np.flatnonzero(act[0]):
            pos = int(pos)
            units.add((L.index, pos))
            if pos >= L.n_learn:
                links.add(("skip", L.index, pos))
        for r, c in zip(*np.nonzero(lm[0])):
            links.add(("w", L.index, int(r), int(c)))
    return ActivitySet(units, links, len(units), len(links))


def complexity_counts(master: MasterTopology, weights: np.ndarray, skip: np.ndarray):
    """(n_active_units, n_active_links) for each row of a stack."""
    _, active_units, _, flat_links = activity_masks(master, weights, skip)
    n_units = sum(a.sum(axis=1) for a in active_units)
    n_skip_links = sum(a[:, L.n_learn:].sum(axis=1) for L, a in zip(master.layers, active_units))
    return n_units, flat_links.sum(axis=1) + n_skip_links


# ---------------------------------------------------------------------------
# Structural edits
# ---------------------------------------------------------------------------


def prune(sub: Subtopology, theta_a: float = DEFAULT_THETA_A) -> int:
    """Disable every enabled learnable link with ``|w| < theta_a``."""
    if theta_a < 0:
        raise ValueError("theta_a must be nonnegative")
    hit = sub.mask & (np.abs(sub.weights) < theta_a)
    n = int(hit.sum())
    if n:
        sub.weights[hit] = 0.0
        sub.mask[hit] = False
        sub.adam.reset(hit)
        sub.invalidate()
    return n


def set_unit_state(sub: Subtopology, addr, enable: bool, weights_source="random",
                   rng=None, memory=None, bound: float = DEFAULT_INIT_BOUND) -> Subtopology:
    """Enable or disable one learnable unit in place.

    ``weights_source`` is ``"random"``, ``"zero"``, ``"memory"`` or an
    explicit array of z-node weights. A memory draw on an empty record list
    falls back to random weights.
    """
    master = sub.master
    if master.is_copy(addr):
        raise ValueError(f"unit {addr} is a copy unit")
    sl = master.unit_param_slice(addr)
    sub.adam.reset(sl)
    sub.invalidate()
    if not enable:
        sub.weights[sl] = 0.0
        sub.mask[sl] = False
        return sub
    if isinstance(weights_source, str):
        if weights_source == "zero":
            sub.weights[sl] = 0.0
            sub.mask[sl] = True
            return sub
        if weights_source == "memory":
            record = memory.sample(addr, rng) if memory is not None else None
            if record is not None:
                return assign_unit_weights(sub, addr, record.weights)
            weights_source = "random"
        if weights_source != "random":
            raise ValueError(f"unknown weights source {weights_source!r}")
        sub.weights[sl] = random_unit_weights(master, addr, rng, bound)
        sub.mask[sl] = True
        return sub
    return assign_unit_weights(sub, addr, weights_source)


def assign_unit_weights(sub: Subtopology, addr, values, mask=None) -> Subtopology:
    """Copy explicit z-node weights into a unit; zero entries stay disabled."""
    sl = sub.master.unit_param_slice(addr)
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size != sl.stop - sl.start:
        raise ValueError("weight record does not match the unit's z-node layout")
    m = values != 0.0 if mask is None else np.asarray(mask, dtype=bool).reshape(-1)
    sub.weights[sl] = np.where(m, values, 0.0)
    sub.mask[sl] = m
    sub.adam.reset(sl)
    sub.invalidate()
    return sub
