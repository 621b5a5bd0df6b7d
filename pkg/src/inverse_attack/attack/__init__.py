from .baselines import baseline_bruteforce, baseline_random, bruteforce_trace
from .core import (BoxPerturbEntry, MatchTuple, PerturbCluster, ProbeConfig, RefinedSet, StateCandidate,
                   adv_loss, cluster_perturbations, match_locations, matching_cost, pgd_attack, pgd_step, rea_loss,
                   refine_locations, sample_cbox, solve_assignment)
from .inverse import AttackResult, InverseConfig, inverse_attack
from .ledger import BudgetExhausted, QueryLedger
from .region import SearchRegion, sample_objects

__all__ = [
    "AttackResult", "BoxPerturbEntry", "BudgetExhausted", "InverseConfig", "MatchTuple", "PerturbCluster",
    "ProbeConfig", "QueryLedger", "RefinedSet", "SearchRegion", "StateCandidate", "adv_loss",
    "baseline_bruteforce", "baseline_random", "bruteforce_trace", "cluster_perturbations", "inverse_attack",
    "match_locations", "matching_cost", "pgd_attack", "pgd_step", "rea_loss", "refine_locations", "sample_cbox",
    "sample_objects", "solve_assignment",
]
