"""Elite archives (stage best, overall best) and the final model choice."""

from __future__ import annotations

import numpy as np

from .dominance import nondominated_sort
from .fitness import objective_matrix


def _complexity_key(sub):
    return (sub.fitness.n_active_links, sub.fitness.n_active_units)


class Archive:
    """Non-dominated set of snapshots.

    ``objectives`` picks the fitness view used for dominance: ``"pop"``
    (validation RMSE, constraint RMSE, active links) or ``"mem"``
    (validation RMSE, singularity loss, constraint loss). Members are private
    copies, so later training of population members does not leak into the
    archive. Among members with identical objectives only the least complex
    is kept (the earliest on a full tie).
    """

    def __init__(self, members=(), objectives: str = "pop"):
        if objectives not in ("pop", "mem"):
            raise ValueError("objectives must be 'pop' or 'mem'")
        self.objectives = objectives
        self.members: list = []
        if members:
            self.update(members)

    def update(self, pop) -> "Archive":
        pool = self.members + [s.copy() for s in pop]
        if not pool:
            return self
        F = objective_matrix(pool, self.objectives)
        front = nondominated_sort(F)[0]
        best = {}
        for i in front:
            key = tuple(F[i])
            j = best.get(key)
            if j is None or _complexity_key(pool[i]) < _complexity_key(pool[j]):
                best[key] = i
        self.members = [pool[i] for i in sorted(best.values())]
        return self

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


def update_archive(archive: Archive, pop) -> Archive:
    return archive.update(pop)


def select_final(archive):
    """Least complex member at or below the median on validation and constraint RMSE."""
    members = list(archive)
    if not members:
        raise ValueError("cannot select from an empty archive")
    perf = np.array([(s.fitness.rmse_valid, s.fitness.rmse_constraint) for s in members])
    med = np.median(perf, axis=0)
    eligible = [i for i in range(len(members)) if np.all(perf[i] <= med)]
    if not eligible:
        return min(members, key=lambda s: s.fitness.rmse_valid)
    return members[min(eligible, key=lambda i: (members[i].fitness.n_active_links,
                                                 members[i].fitness.n_active_units,
                                                 members[i].fitness.rmse_valid))]
