import numpy as np
import pytest

from nesr.config import RunConfig
from nesr.evolution import WeightMemory, breed_intermediate_population, evaluate_stack, run_search
from nesr.evolution.dominance import nondominated_sort
from nesr.evolution.fitness import objective_matrix
from nesr.optimizer import BudgetCounter
from nesr.problems.benchmarks import generate_problem
from nesr.topology import init_subtopology, preset_master

TINY = dict(popsize=4, stages=2, generations=2, n_newborn=3, n_tune=10, n_finetune=5)


@pytest.fixture(scope="module")
def problem():
    return generate_problem("resistors", 0, constraint_samples=10)


def _run(problem, **over):
    cfg = RunConfig(**{**TINY, **over})
    master = preset_master("mastera", 2)
    return run_search(master, problem.bound_data(), cfg, test_set=(problem.X_test, problem.y_test))


def test_run_is_deterministic(problem):
    a, b = _run(problem, seed=3), _run(problem, seed=3)
    assert np.array_equal(a.best.weights, b.best.weights)
    assert [e["members"] for e in a.log] == [e["members"] for e in b.log]
    c = _run(problem, seed=4)
    assert not np.array_equal(a.best.weights, c.best.weights)


def test_budget_and_log_accounting(problem):
    res = _run(problem, seed=1)
    assert res.log[-1]["steps"] == res.budget_used
    assert len(res.log) == 1 + 2 * 2
    assert all(len(e["members"]) == 4 for e in res.log)
    assert all(np.isfinite(m["rmse_int_ext"]) for e in res.log for m in e["members"])
    steps = [e["budget_used"] for e in res.log]
    assert steps == sorted(steps)


def test_budget_cap_is_respected(problem):
    res = _run(problem, seed=2, budget=150)
    assert res.budget_used <= 150
    assert np.isfinite(res.best.fitness.rmse_valid)


def test_zero_stages_returns_initial_best(problem):
    res = _run(problem, seed=0, stages=0)
    assert res.budget_used == 4 * 10 and len(res.log) == 1


def test_final_model_is_non_dominated_in_archive(problem):
    res = _run(problem, seed=5)
    F = objective_matrix(res.overall_best, RunConfig().archive_objectives)
    assert len(nondominated_sort(F)[0]) == len(res.overall_best)
    assert any(s is res.best for s in res.overall_best)


def _population(problem, rng, n=4):
    master = preset_master("mastera", 2)
    pop = [init_subtopology(master, rng) for _ in range(n)]
    evaluate_stack(pop, problem.bound_data())
    return pop


def test_breeding_size_and_determinism(problem):
    cfg = RunConfig(**TINY)
    outs = []
    for _ in range(2):
        rng = np.random.default_rng(11)
        pop = _population(problem, rng)
        mem = WeightMemory(pop[0].master)
        inter = breed_intermediate_population(pop, mem, cfg, problem.bound_data(), BudgetCounter(), rng)
        outs.append(inter)
    assert len(outs[0]) == 4
    for a, b in zip(*outs):
        assert np.array_equal(a.weights, b.weights)


def test_breeding_without_operators_clones_parents(problem):
    cfg = RunConfig(**{**TINY, "p_c": 0.0, "p_m": 0.0, "n_newborn": 0})
    rng = np.random.default_rng(12)
    pop = _population(problem, rng)
    inter = breed_intermediate_population(pop, WeightMemory(pop[0].master), cfg, problem.bound_data(),
                                          BudgetCounter(), rng)
    parents = [p.weights for p in pop]
    assert all(any(np.array_equal(c.weights, w) for w in parents) for c in inter)
