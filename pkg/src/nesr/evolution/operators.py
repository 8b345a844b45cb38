"""Crossover, the two mutation kinds and stage-start perturbation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..topology import DEFAULT_INIT_BOUND, Subtopology, activity_masks, set_unit_state
from .memory import WeightMemory


@dataclass(frozen=True)
class OperatorSettings:
    p_c: float = 0.9
    p_m: float = 0.3
    p_l: float = 0.5
    p_i: float = 0.8
    p_h: float = 0.5
    init_bound: float = DEFAULT_INIT_BOUND


def _active_flags(sub: Subtopology) -> dict:
    _, active, _, _ = activity_masks(sub.master, sub.weights[None], sub.skip[None])
    return {(L.index, int(p)): bool(a[0, p]) for L, a in zip(sub.master.layers, active)
            for p in range(L.n_units)}


def _fill_learnable(child, addr, memory, p_h, rng, bound):
    source = "memory" if rng.random() < p_h else "random"
    set_unit_state(child, addr, True, source, rng=rng, memory=memory, bound=bound)


def _fill_copy(child, addr, memory, p_h, rng):
    k = child.master.skip_index(addr)
    rec = memory.sample(addr, rng) if (memory is not None and rng.random() < p_h) else None
    child.skip[k] = float(rec.weights) if rec is not None else float(rng.integers(2))


def crossover(s1: Subtopology, s2: Subtopology, memory: WeightMemory | None,
              settings: OperatorSettings, rng) -> Subtopology:
    """Unit-by-unit recombination with a per-unit lead parent."""
    if s1.master != s2.master:
        raise ValueError("crossover parents come from different master topologies")
    master = s1.master
    child = Subtopology(master)
    active = (_active_flags(s1), _active_flags(s2))
    parents = (s1, s2)
    for addr in master.units():
        lead = 0 if rng.random() < settings.p_l else 1
        inherit = rng.random() < settings.p_i and active[lead][addr]
        src = parents[lead]
        if master.is_copy(addr):
            if inherit:
                k = master.skip_index(addr)
                child.skip[k] = src.skip[k]
            else:
                _fill_copy(child, addr, memory, settings.p_h, rng)
            continue
        if inherit:
            sl = master.unit_param_slice(addr)
            child.weights[sl] = src.weights[sl]
            child.mask[sl] = src.mask[sl]
        else:
            _fill_learnable(child, addr, memory, settings.p_h, rng, settings.init_bound)
    child.adam.reset()
    child.adam.t = 0
    child.invalidate()
    return child


def mutate(sub: Subtopology, memory: WeightMemory | None, kind: str, p_h: float, rng,
           bound: float = DEFAULT_INIT_BOUND, unit=None) -> Subtopology:
    """Status or weights mutation of one unit, in place.

    Status mutation picks among hidden learnable units; weights mutation among
    active learnable units (output unit included). ``unit`` forces the choice.
    """
    master = sub.master
    if kind == "status":
        pool = master.learnable_units(include_output=False)
        if not pool:
            raise ValueError("no learnable hidden unit to mutate")
        addr = tuple(unit) if unit is not None else pool[int(rng.integers(len(pool)))]
        if sub.unit_enabled(addr):
            set_unit_state(sub, addr, False)
        else:
            _fill_learnable(sub, addr, memory, p_h, rng, bound)
        return sub
    if kind == "weights":
        act = _active_flags(sub)
        pool = [a for a in master.learnable_units() if act[a]]
        if not pool:
            raise ValueError("weights mutation needs at least one active unit")
        addr = tuple(unit) if unit is not None else pool[int(rng.integers(len(pool)))]
        _fill_learnable(sub, addr, memory, p_h, rng, bound)
        return sub
    raise ValueError(f"unknown mutation kind {kind!r}")


def perturb_structure(sub: Subtopology, memory: WeightMemory | None, p_h: float, rng,
                      bound: float = DEFAULT_INIT_BOUND) -> Subtopology:
    """Enable every learnable unit with memory or random weights; set every skip to 1.

    Training afterwards is the caller's job (so a whole population can be
    trained as one batch).
    """
    for addr in sub.master.learnable_units():
        _fill_learnable(sub, addr, memory, p_h, rng, bound)
    sub.skip[:] = 1.0
    sub.adam.reset()
    sub.adam.t = 0
    sub.invalidate()
    return sub


def perturb(sub: Subtopology, memory: WeightMemory | None, p_h: float, rng, budget, data,
            steps: int = 100, bound: float = DEFAULT_INIT_BOUND, **train_options) -> Subtopology:
    """:func:`perturb_structure` followed by ``steps`` of ``L_I`` training under ``budget``."""
    from ..optimizer import train

    perturb_structure(sub, memory, p_h, rng, bound)
    train(sub, "L_I", steps, data, budget, **train_options)
    return sub
