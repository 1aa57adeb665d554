"""Per-run diagnostic reports shared by the iterative reconstruction paths."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["ReconstructionReport", "DivergedError", "fit_geometric_rate"]


def fit_geometric_rate(residuals, floor=1e-14):
    """Least-squares geometric rate of a residual sequence.

    Fits log residuals against the iteration index, ignoring entries at or
    below ``floor`` (rounding noise).  Returns NaN when fewer than two
    usable residuals exist.
    """
    r = np.asarray(residuals, dtype=float)
    keep = r > floor
    if np.sum(keep) < 2:
        return float("nan")
    idx = np.nonzero(keep)[0]
    slope = np.polyfit(idx, np.log(r[idx]), 1)[0]
    return float(math.exp(slope))


@dataclass
class ReconstructionReport:
    """Residual history and fitted contraction rate of one inversion run."""

    operator: str
    eps: float = None
    p: float = 2.0
    iterations: int = 0
    residuals: list = field(default_factory=list)
    fitted_rate: float = float("nan")
    final_error: float = float("nan")
    converged: bool = False

    def finish(self):
        self.iterations = len(self.residuals)
        self.fitted_rate = fit_geometric_rate(self.residuals)
        return self

    def to_json(self, path=None):
        desc = {
            "operator": self.operator,
            "eps": self.eps,
            "p": self.p,
            "iterations": self.iterations,
            "residuals": [float(r) for r in self.residuals],
            "fitted_rate": None if math.isnan(self.fitted_rate) else self.fitted_rate,
            "final_error": None if math.isnan(self.final_error) else self.final_error,
            "converged": self.converged,
        }
        if path is not None:
            with open(path, "w") as fh:
                json.dump(desc, fh, indent=2, sort_keys=True)
        return desc


class DivergedError(RuntimeError):
    """Raised when an iteration's increments grow repeatedly; carries the report."""

    def __init__(self, report: ReconstructionReport):
        super().__init__(
            f"iteration diverged after {report.iterations} steps "
            f"(last residuals {report.residuals[-3:]})"
        )
        self.report = report
