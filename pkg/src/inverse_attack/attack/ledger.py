"""Query accounting against a fixed budget."""

from __future__ import annotations

from dataclasses import dataclass, field

MODELS = ("detect", "track", "predict", "plan")


class BudgetExhausted(RuntimeError):
    pass


@dataclass
class QueryLedger:
    budget: int
    used: dict = field(default_factory=lambda: {m: 0 for m in MODELS})

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("budget must be non-negative")

    @property
    def total(self) -> int:
        return sum(self.used.values())

    @property
    def remaining(self) -> int:
        return self.budget - self.total

    def can_afford(self, n: int = 1) -> bool:
        return self.total + n <= self.budget

    def debit(self, model: str, n: int = 1) -> None:
        """Charge ``n`` queries to ``model``; refuses (without charging) when over budget."""
        if model not in self.used:
            raise KeyError(f"unknown model {model!r}")
        if n < 0:
            raise ValueError("cannot refund queries")
        if not self.can_afford(n):
            raise BudgetExhausted(f"{model}: {n} more would exceed budget {self.budget}")
        self.used[model] += n

    def as_dict(self) -> dict:
        return {"budget": self.budget, **self.used, "total": self.total}
