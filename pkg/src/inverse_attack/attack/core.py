"""Stage one (state perturbations by PGD under the feasible-perturbation
prior) and stage two (matching and refining object locations)."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..lidar import AdvObject, Cluster, ObjectModel
from ..perception import Perturbation
from ..planning import collision_check
from ..prediction import PredictedTrajectory, _window, forward_batch, grad_batch
from ..world import wrap_angle
from .ledger import BudgetExhausted, QueryLedger
from .region import SearchRegion, sample_objects

HEADING_BIN = 0.25
MIN_CLUSTER = 5
DEFAULT_SCALES = (1.0, 1.0, math.pi)


@dataclass
class BoxPerturbEntry:
    delta: Perturbation
    locations: list[AdvObject]

    def __post_init__(self):
        if not self.locations:
            raise ValueError("entry needs at least one location")


@dataclass
class PerturbCluster:
    mu: np.ndarray
    sigma: np.ndarray
    members: list[int]

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        if np.any(self.sigma < 0) or not self.members:
            raise ValueError("cluster needs sigma >= 0 and members")

    @property
    def lower(self) -> np.ndarray:
        return self.mu - 2 * self.sigma

    @property
    def upper(self) -> np.ndarray:
        return self.mu + 2 * self.sigma


@dataclass
class StateCandidate:
    delta: Perturbation
    cluster: int
    loss_init: float
    loss_final: float
    collisions: tuple[bool, ...]
    kept: bool

    @property
    def n_collisions(self) -> int:
        return int(sum(self.collisions))


@dataclass
class MatchTuple:
    matched_box: Perturbation
    matched_locations: list[AdvObject]
    target_state: Perturbation
    cost: float = 0.0
    box_index: int = -1
    state_index: int = -1


@dataclass
class RefinedSet:
    locations: list[AdvObject]
    cost: float
    initial_cost: float
    box: Perturbation
    target: Perturbation
    probes: int = 0


@dataclass(frozen=True)
class ProbeConfig:
    shape: str = "sphere"
    extent: float = 0.1
    K: int = 20

    def __post_init__(self):
        if self.shape not in ("sphere", "cube"):
            raise ValueError("probe shape must be sphere or cube")
        if self.extent < 0 or self.K < 0:
            raise ValueError("probe extent and K must be non-negative")


# --------------------------------------------------------------------------- feasible set

def sample_cbox(sim, region: SearchRegion, n_samples: int, n_objects: int, ledger: QueryLedger,
                rng: np.random.Generator, model: ObjectModel = Cluster()) -> tuple[list[BoxPerturbEntry], bool]:
    """Box perturbations at the current frame for uniformly drawn location sets.

    Returns (entries, exhausted)."""
    out: list[BoxPerturbEntry] = []
    for _ in range(n_samples):
        try:
            ledger.debit("detect")
        except BudgetExhausted:
            return out, True
        objs = sample_objects(region, n_objects, rng, model)
        d = sim.current_perturbation(objs)
        if d is not None:
            out.append(BoxPerturbEntry(d, objs))
    return out, False


def _circ_mean(a: np.ndarray) -> float:
    return float(math.atan2(np.sin(a).sum(), np.cos(a).sum())) if len(a) else 0.0


def _wrap_dist(a, b):
    return np.abs(wrap_angle(np.asarray(a) - np.asarray(b)))


def heading_histogram(dh: np.ndarray, width: float = HEADING_BIN) -> tuple[np.ndarray, np.ndarray]:
    """Counts over (-pi, pi] in equal bins about ``width`` wide.

    The width is rounded so the bins tile the circle; a short leftover bin
    would otherwise split any mode sitting on the +-pi seam."""
    n = max(1, int(round(2 * math.pi / width)))
    edges = np.linspace(-math.pi, math.pi, n + 1)
    idx = np.clip(np.searchsorted(edges, wrap_angle(np.asarray(dh)), side="left") - 1, 0, len(edges) - 2)
    return np.bincount(idx, minlength=len(edges) - 1), edges


def histogram_modes(counts: np.ndarray) -> list[int]:
    """Circular local maxima; the first bin of a plateau represents it."""
    n = len(counts)
    modes = [i for i in range(n)
             if counts[i] > 0 and counts[i] > counts[i - 1] and counts[i] >= counts[(i + 1) % n]]
    if not modes and counts.max() > 0:
        modes = [int(np.argmax(counts))]
    return modes


def cluster_perturbations(cbox: Sequence[BoxPerturbEntry], min_size: int = MIN_CLUSTER,
                          width: float = HEADING_BIN) -> list[PerturbCluster]:
    if len(cbox) < 10:
        raise ValueError("clustering needs at least 10 entries")
    D = np.array([e.delta.as_array() for e in cbox])
    dh = D[:, 2]
    counts, edges = heading_histogram(dh, width)
    bins = np.clip(np.searchsorted(edges, dh, side="left") - 1, 0, len(counts) - 1)
    seeds = [_circ_mean(dh[bins == m]) for m in histogram_modes(counts)]
    labels = np.argmin(_wrap_dist(dh[:, None], np.asarray(seeds)[None, :]), axis=1)
    groups = {k: list(np.flatnonzero(labels == k)) for k in range(len(seeds))}
    groups = {k: v for k, v in groups.items() if v}
    while len(groups) > 1:
        small = [k for k in groups if len(groups[k]) < min_size]
        if not small:
            break
        k = min(small, key=lambda g: (len(groups[g]), g))
        others = [g for g in groups if g != k]
        tgt = min(others, key=lambda g: (float(_wrap_dist(seeds[k], seeds[g])), g))
        groups[tgt] = sorted(groups[tgt] + groups.pop(k))
    out = []
    for k in sorted(groups, key=lambda g: groups[g][0]):
        m = np.asarray(groups[k])
        sub = D[m]
        mu_h = _circ_mean(sub[:, 2])
        mu = np.array([sub[:, 0].mean(), sub[:, 1].mean(), mu_h])
        dev = np.column_stack([sub[:, 0] - mu[0], sub[:, 1] - mu[1], wrap_angle(sub[:, 2] - mu_h)])
        out.append(PerturbCluster(mu, np.sqrt((dev ** 2).mean(axis=0)), [int(i) for i in m]))
    return out


# --------------------------------------------------------------------------- losses

def adv_loss(pred, planned) -> float:
    """Root-sum-square of per-step position differences (horizons truncated)."""
    a = pred.positions if isinstance(pred, PredictedTrajectory) else np.asarray(getattr(pred, "xy", pred))
    b = np.asarray(getattr(planned, "xy", planned))
    n = min(len(a), len(b))
    return float(math.sqrt(((a[:n] - b[:n]) ** 2).sum()))


def _l1_wrapped(delta: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    diff = delta[..., None, :] - boxes
    diff[..., 2] = wrap_angle(diff[..., 2])
    return np.abs(diff).sum(axis=-1)


def rea_loss(delta: Perturbation, cbox: Sequence[BoxPerturbEntry]) -> float:
    """l1 distance to the nearest feasible box perturbation."""
    if not cbox:
        raise ValueError("cbox must not be empty")
    boxes = np.array([e.delta.as_array() for e in cbox])
    return float(_l1_wrapped(delta.as_array(), boxes).min())


def _rea_batch(deltas: np.ndarray, boxes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Loss and l1 subgradient toward the nearest box, for a (B, 3) batch."""
    d = _l1_wrapped(deltas, boxes)
    nearest = boxes[np.argmin(d, axis=1)]
    diff = deltas - nearest
    diff[:, 2] = wrap_angle(diff[:, 2])
    return d.min(axis=1), np.sign(diff)


# --------------------------------------------------------------------------- PGD

def pgd_step(delta, grad, step, lo, hi) -> np.ndarray:
    """One projected descent step: move against the gradient, then clip into [lo, hi]."""
    return np.clip(np.asarray(delta, dtype=float) - np.asarray(step) * np.asarray(grad), lo, hi)


def pgd_attack(sim, cluster: PerturbCluster, cbox: Sequence[BoxPerturbEntry], multipliers: Sequence[float],
               epochs: int, iterations: int, ledger: QueryLedger, rng: np.random.Generator,
               step_scale: float = 0.1, base_multiplier: float = 1.0, frame: int = 0, reserve: int = 0,
               cluster_index: int = 0) -> list[StateCandidate]:
    """Velocity-averaged projected descent on L_adv + L_rea, one run per epoch.

    All epochs advance together as a batch. The best iterate of each epoch is
    returned (so the loss never ends above its starting value); an epoch is
    kept when its prediction collides with the clean plan at the base speed.
    Each epoch's selection check costs one predict query; epochs that cannot
    be paid for (leaving ``reserve`` untouched) are dropped."""
    if not cbox:
        raise ValueError("cbox must not be empty")
    mults = list(multipliers)
    if base_multiplier not in mults:
        mults.append(base_multiplier)
    params = sim.params
    windows = {m: _window(sim.clean_track(m), params.H) for m in mults}
    plans = {m: sim.clean_plan(m) for m in mults}
    boxes = np.array([e.delta.as_array() for e in cbox])
    lo, hi = cluster.lower, cluster.upper
    step = step_scale * cluster.sigma

    def loss_grad(d):
        L = np.zeros(len(d))
        G = np.zeros_like(d)
        for m in multipliers:
            Y, c = forward_batch(*windows[m], d, params, frame)
            l, g = grad_batch(Y, c, plans[m].xy, params.dt)
            L += l
            G += g
        L /= len(multipliers)
        G /= len(multipliers)
        r, rg = _rea_batch(d, boxes)
        return L + r, G + rg

    delta = np.clip(rng.normal(cluster.mu, cluster.sigma, size=(epochs, 3)), lo, hi)
    loss0, _ = loss_grad(delta)
    best, best_loss = delta.copy(), loss0.copy()
    for _ in range(iterations):
        _, g = loss_grad(delta)
        delta = pgd_step(delta, g, step, lo, hi)
        l, _ = loss_grad(delta)
        better = l < best_loss
        best[better], best_loss[better] = delta[better], l[better]

    out = []
    for e in range(epochs):
        if ledger.remaining <= reserve:
            break
        ledger.debit("predict")
        d = Perturbation.from_array(best[e])
        hits = []
        for m in multipliers:
            Y, _ = forward_batch(*windows[m], best[e][None], params, frame)
            pred = PredictedTrajectory(Y[0], params.dt)
            hits.append(collision_check(pred, sim.cfg.adv_dims, plans[m], sim.cfg.ego_dims))
        Yb, _ = forward_batch(*windows[base_multiplier], best[e][None], params, frame)
        kept = collision_check(PredictedTrajectory(Yb[0], params.dt), sim.cfg.adv_dims,
                               plans[base_multiplier], sim.cfg.ego_dims)
        out.append(StateCandidate(d, cluster_index, float(loss0[e]), float(best_loss[e]), tuple(hits), kept))
    return out


# --------------------------------------------------------------------------- matching

def target_weights(target: np.ndarray, scales: Sequence[float] = DEFAULT_SCALES) -> np.ndarray:
    w = np.abs(np.asarray(target, dtype=float)) / np.asarray(scales, dtype=float)
    s = w.sum()
    return w / s if s > 0 else np.full(len(w), 1.0 / len(w))


def matching_cost(box, target, weights: Optional[np.ndarray] = None,
                  scales: Sequence[float] = DEFAULT_SCALES) -> float:
    """Weighted l1 gap between a box perturbation and a target state perturbation."""
    b = box.as_array() if isinstance(box, Perturbation) else np.asarray(box, dtype=float)
    t = target.as_array() if isinstance(target, Perturbation) else np.asarray(target, dtype=float)
    w = target_weights(t, scales) if weights is None else np.asarray(weights, dtype=float)
    diff = np.abs(b - t)
    diff[2] = abs(wrap_angle(b[2] - t[2]))
    return float((w * diff).sum())


def solve_assignment(cost: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-cost assignment on a (possibly rectangular) matrix."""
    rows, cols = linear_sum_assignment(np.asarray(cost, dtype=float))
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def match_locations(cst: Sequence[Perturbation], cbox: Sequence[BoxPerturbEntry],
                    scales: Sequence[float] = DEFAULT_SCALES) -> list[MatchTuple]:
    """Pair every target state with a distinct feasible box perturbation."""
    if not cst or not cbox:
        raise ValueError("match_locations needs non-empty inputs")
    boxes = np.array([e.delta.as_array() for e in cbox])
    cost = np.empty((len(cst), len(cbox)))
    for n, t in enumerate(cst):
        t = t.as_array()
        w = target_weights(t, scales)
        diff = np.abs(boxes - t)
        diff[:, 2] = np.abs(wrap_angle(boxes[:, 2] - t[2]))
        cost[n] = diff @ w
    pairs = solve_assignment(cost)
    if len(pairs) < len(cst):
        warnings.warn(f"{len(cst) - len(pairs)} target states left unmatched", RuntimeWarning, stacklevel=2)
    return [MatchTuple(cbox[m].delta, list(cbox[m].locations), cst[n], float(cost[n, m]), m, n)
            for n, m in sorted(pairs)]


def _probe_offsets(probe: ProbeConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    if probe.shape == "cube":
        return rng.uniform(-probe.extent, probe.extent, size=(n, 3))
    d = rng.normal(size=(n, 3))
    d /= np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-12)
    return d * (probe.extent * rng.random(n) ** (1 / 3))[:, None]


def refine_locations(tuples: Sequence[MatchTuple], probe: ProbeConfig, sim, region: SearchRegion,
                     ledger: QueryLedger, rng: np.random.Generator,
                     scales: Sequence[float] = DEFAULT_SCALES) -> list[RefinedSet]:
    """Random local search around each matched location set.

    Every probe moves all locations of a set within the probe region around
    their matched positions and re-runs detection (one query). The lowest-cost
    set per tuple is kept; tuples reached after the budget ran out keep their
    matched locations."""
    out = []
    for tup in tuples:
        seed_locs = np.array([o.location for o in tup.matched_locations])
        f0 = matching_cost(tup.matched_box, tup.target_state, scales=scales)
        best = RefinedSet(list(tup.matched_locations), f0, f0, tup.matched_box, tup.target_state)
        for _ in range(probe.K):
            if not ledger.can_afford(1):
                break
            ledger.debit("detect")
            locs = region.clip(seed_locs + _probe_offsets(probe, rng, len(seed_locs)))
            objs = [AdvObject(tuple(l), o.model, o.seed) for l, o in zip(locs, tup.matched_locations)]
            d = sim.current_perturbation(objs)
            best.probes += 1
            if d is None:
                continue
            f = matching_cost(d, tup.target_state, scales=scales)
            if f < best.cost:
                best.locations, best.cost, best.box = objs, f, d
        out.append(best)
    return out


__all__ = ["BoxPerturbEntry", "PerturbCluster", "StateCandidate", "MatchTuple", "RefinedSet", "ProbeConfig",
           "sample_cbox", "cluster_perturbations", "pgd_step", "heading_histogram", "histogram_modes", "adv_loss", "rea_loss",
           "pgd_attack", "target_weights", "matching_cost", "solve_assignment", "match_locations",
           "refine_locations"]
