"""Small containers for identity checks that report residuals instead of raising."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Check:
    name: str
    residual: float
    tol: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.residual = float(self.residual)
        self.passed = bool(np.isfinite(self.residual) and self.residual <= self.tol)


@dataclass
class CheckReport:
    title: str
    checks: list = field(default_factory=list)

    def add(self, name, residual, tol):
        check = Check(name, residual, tol)
        self.checks.append(check)
        return check

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def to_dict(self):
        return {
            "title": self.title,
            "passed": self.passed,
            "checks": [
                {"name": c.name, "residual": c.residual, "tol": c.tol, "passed": c.passed}
                for c in self.checks
            ],
        }


def rel_diff(X, Y):
    """Largest entrywise difference, scaled by ``max(1, max|Y|)``."""
    X = X.toarray() if hasattr(X, "toarray") else np.asarray(X, dtype=float)
    Y = Y.toarray() if hasattr(Y, "toarray") else np.asarray(Y, dtype=float)
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch {X.shape} vs {Y.shape}")
    if X.size == 0:
        return 0.0
    return float(np.abs(X - Y).max() / max(1.0, np.abs(Y).max()))
