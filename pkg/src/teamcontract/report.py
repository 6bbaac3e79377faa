from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class SolveReport:
    """Result of one solver run on one instance."""

    method: str
    contract: np.ndarray
    utility: float
    eps: float
    induced_evals: int
    induced_grad_evals: int
    truncated: bool = False
    instance_id: str = ""
    gap: float | None = None
    wall_ms: float = 0.0
    levels: list[float] = field(default_factory=list)

    @property
    def oracle_calls(self) -> int:
        return self.induced_evals + self.induced_grad_evals

    @property
    def sum_beta(self) -> float:
        return float(np.sum(self.contract))

    def to_dict(self) -> dict:
        return {
            "id": self.instance_id,
            "method": self.method,
            "n": int(len(self.contract)),
            "eps": self.eps,
            "utility": self.utility,
            "gap": self.gap,
            "sum_beta": self.sum_beta,
            "induced_evals": self.induced_evals,
            "induced_grad_evals": self.induced_grad_evals,
            "wall_ms": self.wall_ms,
            "truncated": self.truncated,
            "beta": [float(b) for b in self.contract],
        }
