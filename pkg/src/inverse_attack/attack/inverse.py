"""The two-stage inverse attack: from desired state perturbations back to
object locations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..lidar import AdvObject, Cluster, ObjectModel
from ..planning import collision_check
from ..prediction import PredictedTrajectory, _window, forward_batch
from .core import (BoxPerturbEntry, MatchTuple, ProbeConfig, RefinedSet, StateCandidate,
                   cluster_perturbations, match_locations, pgd_attack, refine_locations, sample_cbox)
from .ledger import BudgetExhausted, QueryLedger
from .region import SearchRegion, sample_objects


@dataclass(frozen=True)
class InverseConfig:
    epochs: int = 10
    iterations: int = 50
    step_scale: float = 0.1
    cbox_fraction: float = 0.35
    # shares of the budget for PGD selection checks and for refinement probes;
    # whatever is left verifies candidate sets end to end
    pgd_fraction: float = 0.15
    refine_fraction: float = 0.2
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    base_multiplier: float = 1.0

    def __post_init__(self):
        if self.epochs < 1 or self.iterations < 0 or self.step_scale <= 0:
            raise ValueError("invalid PGD settings")
        fr = (self.cbox_fraction, self.pgd_fraction, self.refine_fraction)
        if not (0 < self.cbox_fraction and min(fr) >= 0 and sum(fr) <= 1):
            raise ValueError("budget fractions must be non-negative and sum to at most 1")


@dataclass
class AttackResult:
    scenario_id: str
    locations: list[AdvObject]
    cbox: list[BoxPerturbEntry]
    states: list[StateCandidate]
    tuples: list[MatchTuple]
    refined: list[RefinedSet]
    ledger: QueryLedger
    note: str = ""

    def to_dict(self) -> dict:
        def objs(ls):
            return [{"location": [round(c, 6) for c in o.location], "seed": o.seed} for o in ls]

        def pert(p):
            return [round(float(v), 6) for v in p.as_array()]

        return {
            "scenario_id": self.scenario_id,
            "note": self.note,
            "states": [{"delta": pert(s.delta), "cluster": s.cluster, "collisions": s.n_collisions}
                       for s in self.states],
            "tuples": [{"box": pert(t.matched_box), "target": pert(t.target_state), "cost": round(t.cost, 6)}
                       for t in self.tuples],
            "refined": [{"locations": objs(r.locations), "cost": round(r.cost, 6), "box": pert(r.box)}
                        for r in self.refined],
            "final": objs(self.locations),
            "queries": self.ledger.as_dict(),
        }


def _modelled_hits(sim, delta: np.ndarray, mults) -> int:
    """Collisions across speeds predicted by the attacker's model (clean history)."""
    params = sim.params
    n = 0
    for m in mults:
        Y, _ = forward_batch(*_window(sim.clean_track(m), params.H), delta[None], params)
        n += collision_check(PredictedTrajectory(Y[0], params.dt), sim.cfg.adv_dims,
                             sim.clean_plan(m), sim.cfg.ego_dims)
    return n


def verify_candidates(sim, candidates: Sequence[list[AdvObject]], ledger: QueryLedger,
                      mults: Sequence[float]) -> tuple[int, list[tuple[int, float]]]:
    """Evaluate candidates end to end at every speed while the budget lasts.

    Returns the index of the best candidate (most collisions, then lowest
    mean ATD, then earliest) and the per-candidate scores."""
    scores: list[tuple[int, float]] = []
    for objs in candidates:
        if not ledger.can_afford(len(mults)):
            break
        ledger.debit("predict", len(mults))
        outs = [sim.evaluate(objs, m) for m in mults]
        scores.append((sum(o.collision for o in outs), float(np.mean([o.atd for o in outs]))))
    if not scores:
        return 0, scores
    best = min(range(len(scores)), key=lambda i: (-scores[i][0], scores[i][1], i))
    return best, scores


def inverse_attack(sim, region: SearchRegion, budget: int, rng: np.random.Generator,
                   cfg: InverseConfig = InverseConfig(), model: ObjectModel = Cluster(),
                   n_objects: int | None = None) -> AttackResult:
    """Run both stages within ``budget`` queries and pick one location set.

    Budget use, in order: clean plans (one per speed), the feasible set, PGD
    selection checks, refinement probes, then end-to-end checks of candidate
    sets (one query per speed each)."""
    ledger = QueryLedger(budget)
    n_objects = sim.cfg.n_objects if n_objects is None else n_objects
    mults = list(sim.cfg.velocity_multipliers)
    sid = sim.cfg.scenario_id
    try:
        ledger.debit("plan", len(mults))
    except BudgetExhausted:
        return AttackResult(sid, sample_objects(region, n_objects, rng, model), [], [], [], [], ledger,
                            "budget below clean-plan cost")
    cbox, _ = sample_cbox(sim, region, int(cfg.cbox_fraction * budget), n_objects, ledger, rng, model)
    if not cbox:
        return AttackResult(sid, sample_objects(region, n_objects, rng, model), cbox, [], [], [], ledger,
                            "no feasible samples")
    # feasible samples ranked by the attacker's own model, as fallbacks
    modelled = [_modelled_hits(sim, e.delta.as_array(), mults) for e in cbox]
    by_model = sorted(range(len(cbox)), key=lambda i: (-modelled[i], i))
    states: list[StateCandidate] = []
    tuples: list[MatchTuple] = []
    refined: list[RefinedSet] = []
    note = ""
    if len(cbox) >= 10:
        clusters = cluster_perturbations(cbox)
        order = sorted(range(len(clusters)), key=lambda k: (-len(clusters[k].members), k))
        reserve = ledger.remaining - int(cfg.pgd_fraction * budget)
        for k in order:
            if ledger.remaining <= reserve:
                break
            states += pgd_attack(sim, clusters[k], cbox, mults, cfg.epochs, cfg.iterations, ledger, rng,
                                 cfg.step_scale, cfg.base_multiplier, reserve=reserve, cluster_index=k)
        kept = sorted((s for s in states if s.kept), key=lambda s: (-s.n_collisions, s.loss_final))
        if kept:
            tuples = match_locations([s.delta for s in kept], cbox)
            rank = {id(s.delta): i for i, s in enumerate(kept)}
            tuples.sort(key=lambda t: (rank[id(t.target_state)], t.cost))
            sub = QueryLedger(min(ledger.remaining, int(cfg.refine_fraction * budget)))
            refined = refine_locations(tuples, cfg.probe, sim, region, sub, rng)
            ledger.debit("detect", sub.total)
        else:
            note = "no colliding state found"
    else:
        note = "too few feasible samples to cluster"
    # candidates: refined sets first (each tuple once), then model-ranked samples
    candidates, seen = [], set()
    for r in refined:
        key = tuple(o.location for o in r.locations)
        if key not in seen:
            seen.add(key)
            candidates.append(r.locations)
    for i in by_model:
        key = tuple(o.location for o in cbox[i].locations)
        if key not in seen:
            seen.add(key)
            candidates.append(cbox[i].locations)
    best, _ = verify_candidates(sim, candidates, ledger, mults)
    return AttackResult(sid, candidates[best], cbox, states, tuples, refined, ledger, note)
