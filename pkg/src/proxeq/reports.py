"""Pass/fail reports shared by the checking routines and the CLI."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Condition:
    """One checked inequality. ``margin`` is the slack: >= 0 means satisfied."""

    name: str
    value: float
    margin: float
    tol: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": _num(self.value),
            "margin": _num(self.margin),
            "tol": self.tol,
            "pass": bool(self.passed),
        }


def _num(x):
    x = float(x)
    return x if np.isfinite(x) else str(x)


def at_most(name: str, value: float, bound: float, tol: float) -> Condition:
    """value <= bound + tol."""
    margin = bound + tol - value
    return Condition(name, value, margin, tol, bool(margin >= 0))


def at_least(name: str, value: float, bound: float, tol: float) -> Condition:
    """value >= bound - tol."""
    margin = value - (bound - tol)
    return Condition(name, value, margin, tol, bool(margin >= 0))


@dataclass
class Report:
    claim: str
    conditions: list[Condition] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    points: list = field(default_factory=list)
    verdict_override: str | None = None

    def add(self, c: Condition) -> Condition:
        self.conditions.append(c)
        return c

    @property
    def verdict(self) -> str:
        if self.verdict_override is not None:
            return self.verdict_override
        return "pass" if all(c.passed for c in self.conditions) else "fail"

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def failures(self) -> list[Condition]:
        return [c for c in self.conditions if not c.passed]

    def worst(self) -> Condition | None:
        return min(self.conditions, key=lambda c: c.margin, default=None)

    def to_dict(self) -> dict:
        return {
            "claim": self.claim,
            "conditions": [c.to_dict() for c in self.conditions],
            "verdict": self.verdict,
            "notes": list(self.notes),
        }

    def summary(self) -> str:
        w = self.worst()
        tail = f", worst {w.name}: margin {w.margin:.3e}" if w is not None else ""
        return f"{self.claim}: {self.verdict} ({len(self.conditions)} conditions{tail})"
