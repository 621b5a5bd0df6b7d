"""Standalone experiments on the surrogate pipeline: which history frame is
worth attacking, and what box deviations object placements produce."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..attack import sample_objects
from ..attack.core import heading_histogram, histogram_modes
from ..prediction import _window, forward_batch, grad_batch
from ..scene import SceneSim
from .metrics import metric_atd
from .suite import object_model, region_of

STATE_BOUNDS = (np.array([-1.0, -1.0, -math.pi]), np.array([1.0, 1.0, math.pi]))


def single_frame_attack(sim: SceneSim, frame: int, rng: np.random.Generator, multiplier: float = 1.0,
                        starts: int = 8, iterations: int = 100, step: float = 0.05,
                        bounds=STATE_BOUNDS) -> tuple[np.ndarray, float]:
    """Projected descent on one history frame's state, from several random starts.

    Returns the best perturbation and the ATD of the resulting prediction to
    the clean plan."""
    params = sim.params
    xy, h = _window(sim.clean_track(multiplier), params.H)
    planned = sim.clean_plan(multiplier).xy
    lo, hi = bounds
    scale = hi - lo
    delta = rng.uniform(lo, hi, size=(starts, 3))
    delta[0] = 0.0
    best, best_loss = delta.copy(), np.full(starts, np.inf)
    for _ in range(iterations + 1):
        Y, cache = forward_batch(xy, h, delta, params, frame)
        loss, g = grad_batch(Y, cache, planned, params.dt)
        better = loss < best_loss
        best[better], best_loss[better] = delta[better], loss[better]
        delta = np.clip(delta - step * scale * g, lo, hi)
    k = int(np.argmin(best_loss))
    Y, _ = forward_batch(xy, h, best[k][None], params, frame)
    return best[k], metric_atd(Y[0], planned)


@dataclass
class FrameSensitivity:
    frames: list[int]
    atd: np.ndarray          # (scenes, frames)

    @property
    def mean(self) -> np.ndarray:
        return self.atd.mean(axis=0)

    @property
    def stderr(self) -> np.ndarray:
        n = len(self.atd)
        return self.atd.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(len(self.frames))


def frame_sensitivity(sims: Sequence[SceneSim], seed: int = 0, frames: Sequence[int] | None = None,
                      **kw) -> FrameSensitivity:
    """Post-attack ATD per scene for single-frame attacks on each history frame."""
    if frames is None:
        H = sims[0].params.H if sims else 5
        frames = list(range(-H + 1, 1))
    atd = np.empty((len(sims), len(frames)))
    for i, sim in enumerate(sims):
        for j, f in enumerate(frames):
            rng = np.random.default_rng([seed, i, j])
            atd[i, j] = single_frame_attack(sim, f, rng, **kw)[1]
    return FrameSensitivity(list(frames), atd)


def box_survey(sim: SceneSim, n: int, rng: np.random.Generator) -> np.ndarray:
    """Box deviations (dx, dy, dh) at the current frame for ``n`` uniform placements.

    Placements that leave the vehicle undetected are skipped."""
    region = region_of(sim.cfg)
    model = object_model(sim.cfg)
    out = []
    for _ in range(n):
        p = sim.current_perturbation(sample_objects(region, sim.cfg.n_objects, rng, model))
        if p is not None:
            out.append(p.as_array())
    return np.array(out).reshape(-1, 3)


def heading_modes(dh: np.ndarray, min_fraction: float = 0.0) -> list[float]:
    """Bin centres of the local maxima of the heading-deviation histogram.

    Maxima holding less than ``min_fraction`` of the samples are dropped as noise."""
    dh = np.asarray(dh)
    counts, edges = heading_histogram(dh)
    centres = (edges[:-1] + edges[1:]) / 2
    return [float(centres[i]) for i in histogram_modes(counts) if counts[i] >= min_fraction * len(dh)]


def max_mode_separation(modes: Sequence[float]) -> float:
    """Largest wrapped angular distance between any two modes (0 for fewer than two)."""
    best = 0.0
    for i, a in enumerate(modes):
        for b in modes[i + 1:]:
            d = abs((a - b + math.pi) % (2 * math.pi) - math.pi)
            best = max(best, d)
    return best
