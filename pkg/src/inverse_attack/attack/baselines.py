"""Reference attacks: random placement and brute-force sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..lidar import AdvObject, Cluster, ObjectModel
from .ledger import BudgetExhausted, QueryLedger
from .region import SearchRegion, sample_objects


def baseline_random(region: SearchRegion, n_objects: int, rng: np.random.Generator,
                    model: ObjectModel = Cluster()) -> list[AdvObject]:
    """Uniform placement; costs no queries."""
    return sample_objects(region, n_objects, rng, model)


@dataclass
class BruteForceTrace:
    """Every evaluated set with its ATD at the base speed, in draw order."""

    sets: list[list[AdvObject]]
    atd: np.ndarray

    def best(self, n: int | None = None) -> tuple[list[AdvObject], float, int]:
        """Argmin over the first ``n`` draws (first wins ties)."""
        k = len(self.sets) if n is None else min(n, len(self.sets))
        if k == 0:
            raise ValueError("no evaluated sets")
        i = int(np.argmin(self.atd[:k]))
        return self.sets[i], float(self.atd[i]), k


def bruteforce_trace(sim, region: SearchRegion, n_samples: int, n_objects: int, ledger: QueryLedger,
                     rng: np.random.Generator, model: ObjectModel = Cluster(),
                     base_multiplier: float = 1.0, planted: list | None = None) -> BruteForceTrace:
    sets, atd = [], []
    draws = list(planted or [])
    for i in range(n_samples):
        try:
            ledger.debit("predict")
        except BudgetExhausted:
            break
        objs = draws[i] if i < len(draws) else sample_objects(region, n_objects, rng, model)
        sets.append(objs)
        atd.append(sim.evaluate(objs, base_multiplier).atd)
    return BruteForceTrace(sets, np.asarray(atd))


def baseline_bruteforce(sim, region: SearchRegion, n_samples: int, n_objects: int, ledger: QueryLedger,
                        rng: np.random.Generator, model: ObjectModel = Cluster(),
                        base_multiplier: float = 1.0) -> list[AdvObject]:
    """Lowest-ATD set among ``n_samples`` uniform draws, one query each."""
    trace = bruteforce_trace(sim, region, n_samples, n_objects, ledger, rng, model, base_multiplier)
    return trace.best()[0]
