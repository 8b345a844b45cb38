"""The staged neuro-evolutionary search loop."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import predict_stack
from ..losses import BoundData, LossKind
from ..optimizer import BudgetCounter, train_group
from ..topology import MasterTopology, Subtopology, init_subtopology
from .archive import Archive, select_final
from .dominance import crowding_distance, nondominated_sort, ranks, truncate
from .fitness import evaluate_stack, objective_matrix
from .memory import WeightMemory, memory_candidates, memory_update
from .operators import crossover, mutate, perturb_structure


@dataclass
class RunResult:
    best: Subtopology
    overall_best: list
    budget_used: int
    log: list = field(default_factory=list)
    wall_time: float = 0.0


class _Search:
    """State shared by the phases of one run."""

    def __init__(self, master, data, config, rng, budget, test_set, on_log, run_id):
        self.master = master
        self.data = data
        self.cfg = config
        self.rng = rng
        self.budget = budget
        self.test_set = test_set
        self.on_log = on_log
        self.run_id = run_id
        self.ops = config.operators
        self.memory = WeightMemory(master, config.s_hist)
        self.uids = itertools.count()
        self.log = []
        self.steps = 0

    # -- helpers -----------------------------------------------------------

    def tag(self, sub):
        sub.uid = next(self.uids)
        return sub

    def train(self, subs, kind, steps):
        if not subs or steps <= 0:
            return
        out = train_group(subs, kind, steps, self.data, self.budget, self.cfg.theta_a,
                          self.cfg.adam, self.cfg.loss)
        self.steps += out.steps
        for s in subs:
            s.invalidate()
        evaluate_stack(subs, self.data, self.cfg.loss)

    def evaluate(self, subs):
        evaluate_stack(subs, self.data, self.cfg.loss)

    def update_memory(self, source):
        memory_update(self.memory, memory_candidates(source))

    # -- phases ------------------------------------------------------------

    def breed(self, pop):
        """Offspring by tournament, crossover and mutation, trained briefly; best POPSIZE kept."""
        cfg, rng = self.cfg, self.rng
        F = objective_matrix(pop, "pop")
        rank = ranks(F)
        crowd = np.empty(len(pop))
        for front in nondominated_sort(F):
            crowd[front] = crowding_distance(F[front])

        def tournament():
            i, j = rng.integers(len(pop), size=2)
            if (rank[i], -crowd[i]) <= (rank[j], -crowd[j]):
                return pop[i]
            return pop[j]

        kids = []
        for _ in range(cfg.n_offspring):
            a, b = tournament(), tournament()
            if rng.random() < self.ops.p_c:
                child = crossover(a, b, self.memory, self.ops, rng)
            else:
                child = a.copy()
                child.invalidate()
            for kind in ("status", "weights"):
                if rng.random() < self.ops.p_m:
                    try:
                        mutate(child, self.memory, kind, self.ops.p_h, rng, self.ops.init_bound)
                    except ValueError:
                        pass  # nothing eligible (e.g. no active unit)
            kids.append(self.tag(child))
        self.train(kids, LossKind.L_I, cfg.n_newborn)
        self.evaluate(kids)
        keep = truncate(objective_matrix(kids, "pop"), cfg.popsize)
        return [kids[i] for i in keep]

    def record(self, stage, generation, pop, stage_best, overall_best):
        members = []
        preds = None
        if self.test_set is not None:
            X, y = self.test_set
            W = np.stack([s.weights for s in pop])
            S = np.stack([s.skip for s in pop])
            M = np.stack([s.mask for s in pop])
            preds = predict_stack(self.master, W, S, X, self.cfg.theta_div, M)
        for k, s in enumerate(pop):
            fv = s.fitness
            row = {"uid": s.uid, "complexity": list(fv.complexity), "rmse_valid": fv.rmse_valid,
                   "rmse_constraint": fv.rmse_constraint}
            if preds is not None:
                row["rmse_int_ext"] = _rmse(preds[k], self.test_set[1])
            members.append(row)
        entry = {"run": self.run_id, "seed": self.cfg.seed, "stage": stage, "generation": generation,
                 "budget_used": self.budget.used, "steps": self.steps, "members": members,
                 "stage_best_size": len(stage_best) if stage_best is not None else 0,
                 "overall_best_size": len(overall_best), "memory_records": len(self.memory)}
        self.log.append(entry)
        if self.on_log is not None:
            self.on_log(entry)


def breed_intermediate_population(pop, memory: WeightMemory, config, data: BoundData, budget, rng) -> list:
    """One breeding phase outside a full run: offspring trained ``n_newborn`` steps, best ``popsize`` kept."""
    st = _Search(pop[0].master, data, config, rng, budget, None, None, 0)
    st.memory = memory
    return st.breed(pop)


def _rmse(pred, y) -> float:
    r = np.where(np.isfinite(pred), pred - y, 1e6)
    return float(np.sqrt(np.mean(r * r)))


def run_search(master: MasterTopology, data: BoundData, config, rng=None, budget=None,
               test_set=None, on_log=None, run_id: int = 0) -> RunResult:
    """Run the staged search once and return the selected model.

    ``test_set`` is an optional ``(X, y)`` pair scored in the per-generation
    log; ``on_log`` receives each log entry as it is produced.
    """
    t0 = time.perf_counter()
    cfg = config
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    budget = BudgetCounter(cfg.budget) if budget is None else budget
    st = _Search(master, data, cfg, rng, budget, test_set, on_log, run_id)

    pop = [st.tag(init_subtopology(master, rng, cfg.init_bound)) for _ in range(cfg.popsize)]
    st.evaluate(pop)
    st.train(pop, LossKind.L_I, cfg.n_tune)
    st.update_memory(pop)
    overall = Archive(pop, cfg.archive_objectives)
    st.record(0, 0, pop, None, overall)

    for stage in range(1, cfg.stages + 1):
        if budget.exhausted:
            break
        for s in pop:
            perturb_structure(s, st.memory, st.ops.p_h, rng, cfg.init_bound)
        st.evaluate(pop)
        st.train(pop, LossKind.L_I, cfg.n_tune)
        stage_best = Archive(pop, cfg.archive_objectives)
        for gen in range(1, cfg.generations + 1):
            if budget.exhausted:
                break
            inter = st.breed(pop)
            st.train(inter, LossKind.L_III, cfg.n_tune)
            front = nondominated_sort(objective_matrix(pop, "pop"))[0]
            # tuned copies join the merge; the originals stay in the pool
            tuned = [st.tag(pop[i].copy()) for i in front]
            st.train(tuned, LossKind.L_II, cfg.n_finetune)
            union = pop + inter + tuned
            pop = [union[i] for i in truncate(objective_matrix(union, "pop"), cfg.popsize)]
            stage_best.update(pop)
            st.update_memory(stage_best.members)
            st.record(stage, gen, pop, stage_best, overall)
        overall.update(stage_best.members)

    best = select_final(overall)
    return RunResult(best, list(overall.members), budget.used, st.log, time.perf_counter() - t0)
