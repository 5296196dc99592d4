from __future__ import annotations

import math
from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class EnergyEstimate:
    """A point estimate with its standard error over ``n_samples`` i.i.d. rows."""

    value: float
    std_error: float
    n_samples: int
    feasible: bool = True

    def __post_init__(self):
        if not math.isfinite(self.std_error) or self.std_error < 0:
            raise ValueError(f"std_error must be finite and non-negative, got {self.std_error}")

    def per_site(self, n_qubits: int) -> "EnergyEstimate":
        return EnergyEstimate(self.value / n_qubits, self.std_error / n_qubits,
                              self.n_samples, self.feasible)

    def to_dict(self) -> dict:
        return asdict(self)
