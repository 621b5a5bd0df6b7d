"""Seeded scenario generation and the suite configuration file."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from ..world import DEFAULT_MULTIPLIERS, ConfigError, Pose2D, ScenarioConfig, load_yaml

METHODS = ("inverse", "bruteforce", "random", "none")


class BudgetError(ValueError):
    """Query budget that no attack can run with."""


def derive_seed(*parts: int) -> int:
    """64-bit seed from a tuple of non-negative integers."""
    state = np.random.SeedSequence([int(p) & 0xFFFFFFFFFFFFFFFF for p in parts]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


@dataclass
class SuiteConfig:
    n_scenes: int = 50
    seed: int = 0
    budget: int = 200
    methods: tuple[str, ...] = ("inverse", "bruteforce", "random", "none")
    # extra budgets per method, reported as "<method>@<budget>"
    budget_sweep: dict = field(default_factory=dict)
    shifts: tuple[float, ...] = ()
    # random displacement directions evaluated per scene and shift
    shift_draws: int = 4
    sizes: tuple[float, ...] = ()
    # methods the displacement and size sweeps apply to
    sweep_methods: tuple[str, ...] = ("inverse",)
    defense: bool = False
    repeats: int = 3
    multipliers: tuple[float, ...] = DEFAULT_MULTIPLIERS
    # generator ranges: lateral gap between lane centre and the parked car,
    # and how far behind the parked car the victim is at frame 0
    lateral_range: tuple[float, float] = (5.3, 6.0)
    behind_range: tuple[float, float] = (4.0, 7.5)
    base_speed: float = 9.0
    n_objects: int = 3
    scenarios: list = field(default_factory=list)

    def __post_init__(self):
        self.methods = tuple(self.methods)
        self.sweep_methods = tuple(self.sweep_methods)
        self.shifts = tuple(float(s) for s in self.shifts)
        self.sizes = tuple(float(s) for s in self.sizes)
        self.multipliers = tuple(float(m) for m in self.multipliers)
        self.lateral_range = tuple(float(v) for v in self.lateral_range)
        self.behind_range = tuple(float(v) for v in self.behind_range)
        self.seed = int(self.seed) & 0xFFFFFFFFFFFFFFFF
        self.budget_sweep = {str(k): tuple(int(b) for b in v) for k, v in dict(self.budget_sweep).items()}
        self.validate()

    def validate(self) -> None:
        bad = [m for m in (*self.methods, *self.sweep_methods) if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"unknown methods {bad}; choose from {METHODS}")
        if self.n_scenes < 0 or self.repeats < 1 or self.n_objects < 1 or self.shift_draws < 1:
            raise ConfigError("n_scenes >= 0 and repeats, n_objects, shift_draws >= 1 required")
        if any(s < 0 for s in self.shifts) or any(s <= 0 for s in self.sizes):
            raise ConfigError("shifts must be >= 0 and sizes > 0")
        if not self.multipliers or any(m <= 0 for m in self.multipliers):
            raise ConfigError("multipliers must be positive")
        lo, hi = self.lateral_range
        if not 0 < lo <= hi:
            raise ConfigError("lateral_range must be increasing and positive")
        lo, hi = self.behind_range
        if not 0 <= lo <= hi:
            raise ConfigError("behind_range must be increasing and non-negative")
        if self.base_speed <= 0:
            raise ConfigError("base_speed must be positive")
        unknown = set(self.budget_sweep) - set(METHODS[:2])
        if unknown:
            raise ConfigError(f"budget_sweep only applies to inverse and bruteforce, got {sorted(unknown)}")
        budgets = [self.budget, *(b for v in self.budget_sweep.values() for b in v)]
        if any(b < 1 for b in budgets):
            raise BudgetError("query budgets must be at least 1")
        if "inverse" in self.methods and min(budgets) < len(self.multipliers):
            raise BudgetError(f"the inverse attack needs a budget of at least {len(self.multipliers)} "
                              "(one clean plan per velocity)")

    @classmethod
    def from_dict(cls, data: dict) -> "SuiteConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown suite keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except (ConfigError, BudgetError):
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def load_suite(path: str | Path | None) -> SuiteConfig:
    return SuiteConfig() if path is None else SuiteConfig.from_dict(load_yaml(path))


def generate_scenario(suite: SuiteConfig, index: int) -> ScenarioConfig:
    """One straight-road scene: the victim drives along y = 0 towards a car
    parked on its right."""
    seed = derive_seed(suite.seed, index)
    rng = np.random.default_rng(seed)
    lateral = rng.uniform(*suite.lateral_range)
    behind = rng.uniform(*suite.behind_range)
    return ScenarioConfig(
        adv_pose=Pose2D(0.0, -lateral, 0.0),
        attack_point=Pose2D(-behind, 0.0, 0.0),
        victim_start=Pose2D(-behind - 25.0, 0.0, 0.0),
        base_speed=suite.base_speed,
        velocity_multipliers=suite.multipliers,
        n_objects=suite.n_objects,
        query_budget=suite.budget,
        seed=seed,
        scenario_id=f"scene-{index:04d}",
    )


def suite_scenarios(suite: SuiteConfig) -> list[ScenarioConfig]:
    """Explicit scenarios from the config if any, else ``n_scenes`` generated ones."""
    if suite.scenarios:
        out = []
        for i, data in enumerate(suite.scenarios):
            data = dict(data)
            data.setdefault("scenario_id", f"scene-{i:04d}")
            data.setdefault("seed", derive_seed(suite.seed, i))
            data.setdefault("query_budget", suite.budget)
            out.append(ScenarioConfig.from_dict(data))
        return out
    return [generate_scenario(suite, i) for i in range(suite.n_scenes)]
