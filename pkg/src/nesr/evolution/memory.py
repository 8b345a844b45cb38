"""Weight memory: per-unit lists of z-node weights taken from elite subtopologies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..topology import MasterTopology, Subtopology, activity_masks
from .dominance import dominates, nondominated_sort
from .fitness import objective_matrix

DEFAULT_S_HIST = 10


@dataclass(frozen=True)
class MemoryRecord:
    """Weights of one unit. Learnable units store their z-node rows (flattened,
    ``arity * (n_in + 1)`` values); copy units store the skip bit."""

    addr: tuple
    weights: np.ndarray | float
    objectives: tuple  # memory objectives of the donor
    donor: int = -1

    def to_dict(self) -> dict:
        w = self.weights.tolist() if isinstance(self.weights, np.ndarray) else float(self.weights)
        return {"addr": list(self.addr), "weights": w, "objectives": list(self.objectives),
                "donor": self.donor}

    @classmethod
    def from_dict(cls, doc: dict) -> "MemoryRecord":
        w = doc["weights"]
        w = np.asarray(w, dtype=float) if isinstance(w, list) else float(w)
        return cls(tuple(doc["addr"]), w, tuple(doc["objectives"]), doc.get("donor", -1))


class WeightMemory:
    def __init__(self, master: MasterTopology, s_hist: int = DEFAULT_S_HIST):
        if s_hist < 0:
            raise ValueError("s_hist must be nonnegative")
        self.master = master
        self.s_hist = int(s_hist)
        self.lists: dict = {addr: [] for addr in master.units()}

    def records(self, addr) -> list:
        return self.lists[tuple(addr)]

    def sample(self, addr, rng):
        """A uniformly chosen record of the unit, or None when its list is empty."""
        recs = self.lists[tuple(addr)]
        if not recs:
            return None
        return recs[int(rng.integers(len(recs)))]

    def donor_objectives(self) -> list:
        """Distinct memory objectives of every donor that still has a record."""
        seen = {}
        for recs in self.lists.values():
            for r in recs:
                seen.setdefault((r.donor, r.objectives), r.objectives)
        return list(seen.values())

    def __len__(self):
        return sum(len(v) for v in self.lists.values())

    def to_dict(self) -> dict:
        return {"s_hist": self.s_hist,
                "records": [r.to_dict() for recs in self.lists.values() for r in recs]}


def memory_candidates(source) -> list:
    """Well-performing, parsimonious members of ``source`` (fitness already evaluated).

    A: non-dominated under memory objectives; B: members of A strictly below
    the median of A on every memory objective (A itself if none); C: members
    of B whose active-link count is at most the third quartile of B's.
    """
    source = list(source)
    if not source:
        raise ValueError("candidate source is empty")
    F = objective_matrix(source, "mem")
    A = nondominated_sort(F)[0]
    med = np.median(F[A], axis=0)
    B = [i for i in A if np.all(F[i] < med)] or A
    links = np.array([source[i].fitness.n_active_links for i in B], dtype=float)
    q3 = np.quantile(links, 0.75)
    C = [i for i, n in zip(B, links) if n <= q3] or B
    return [source[i] for i in C]


def unit_records(sub: Subtopology, donor: int = -1) -> list:
    """A record for every active unit of ``sub``."""
    master = sub.master
    _, active, _, _ = activity_masks(master, sub.weights[None], sub.skip[None])
    obj = sub.fitness.mem_objectives
    out = []
    for L, act in zip(master.layers, active):
        for pos in np.flatnonzero(act[0]):
            addr = (L.index, int(pos))
            if pos < L.n_learn:
                w = sub.weights[master.unit_param_slice(addr)].copy()
            else:
                w = float(sub.skip[master.skip_index(addr)])
            out.append(MemoryRecord(addr, w, obj, donor))
    return out


def memory_update(memory: WeightMemory, C) -> WeightMemory:
    """Evict records of donors dominated by a candidate, then insert candidates' units."""
    C = list(C)
    objs = [s.fitness.mem_objectives for s in C]
    for addr, recs in memory.lists.items():
        memory.lists[addr] = [r for r in recs if not any(dominates(c, r.objectives) for c in objs)]
    for s, obj in zip(C, objs):
        if any(dominates(d, obj) for d in memory.donor_objectives()):
            continue
        for rec in unit_records(s, donor=getattr(s, "uid", -1)):
            lst = memory.lists[rec.addr]
            if len(lst) < memory.s_hist:
                lst.append(rec)
    return memory
