"""Evolutionary search over subtopologies."""

from .algorithm import RunResult, breed_intermediate_population, run_search
from .archive import Archive, select_final, update_archive
from .dominance import crowding_distance, dominates, nondominated_sort, ranks, truncate
from .fitness import FitnessVector, evaluate_fitness, evaluate_stack, objective_matrix
from .memory import MemoryRecord, WeightMemory, memory_candidates, memory_update
from .operators import OperatorSettings, crossover, mutate, perturb, perturb_structure

__all__ = [
    "Archive", "FitnessVector", "breed_intermediate_population", "perturb", "MemoryRecord", "OperatorSettings", "RunResult", "WeightMemory",
    "crossover", "crowding_distance", "dominates", "evaluate_fitness", "evaluate_stack",
    "memory_candidates", "memory_update", "mutate", "nondominated_sort", "objective_matrix",
    "perturb_structure", "ranks", "run_search", "select_final", "truncate", "update_archive",
]
