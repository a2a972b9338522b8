from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from lagrangian_audit.utils.constants import CASE_I, FLAT_BOTH, INCONSISTENT


@dataclass(frozen=True, eq=False)
class CurvatureProfile:
    """Sectional curvature samples summarized per plane class (within factor 1, within factor 2, mixed)."""
    c1_estimate: float
    c2_estimate: float
    mixed_estimate: float
    max_deviation: float
    c1_deviation: float = 0.0
    c2_deviation: float = 0.0
    mixed_max: float = 0.0
    split: Optional[Tuple[int, int]] = None

    def to_dict(self) -> Dict[str, float]:
        return {
            "c1_estimate": self.c1_estimate,
            "c2_estimate": self.c2_estimate,
            "mixed_estimate": self.mixed_estimate,
            "max_deviation": self.max_deviation,
            "c1_deviation": self.c1_deviation,
            "c2_deviation": self.c2_deviation,
            "mixed_max": self.mixed_max,
        }


def closed_form_spectrum(n: int, stages: int, c_tilde: float) -> List[Tuple[float, float]]:
    """
    (lambda_kk, mu_k) for k = 1..stages on the eps = -1 branch, from
    (n - k + 1) mu_k^2 = c + sum_{i<k} mu_i^2 and lambda_kk = -(n - k) mu_k.
    """
    out = []
    accumulated = c_tilde
    for k in range(1, stages + 1):
        root = np.sqrt(accumulated / (n - k + 1))
        out.append(((n - k) * root, -root))
        accumulated += root ** 2
    return out


@dataclass(frozen=True, eq=False)
class AdaptedFrame:
    X: np.ndarray                 # (n1, n) rows in orthonormal frame components
    Y: np.ndarray                 # (n2, n)
    lambdas: List[float]
    mus: List[Optional[float]]    # None when nothing is left to diagonalize
    epsilons: List[Optional[int]]
    f_values: List[float]
    split: Tuple[int, int]
    null_stages: List[int] = field(default_factory=list)
    eigen_spreads: List[float] = field(default_factory=list)

    @property
    def n(self) -> int:
        return sum(self.split)

    @property
    def basis(self) -> np.ndarray:
        return np.vstack([self.X.reshape(-1, self.n), self.Y.reshape(-1, self.n)])

    def orthonormality_residual(self) -> float:
        basis = self.basis
        return float(np.max(np.abs(basis @ basis.T - np.eye(len(basis))))) if len(basis) else 0.0

    def measured_mus(self) -> np.ndarray:
        return np.array([0.0 if mu is None else mu for mu in self.mus])

    def spectral_table(self, c_tilde: float) -> List[Dict[str, Optional[float]]]:
        closed = closed_form_spectrum(self.n, len(self.lambdas), c_tilde)
        rows = []
        for k, (lam, mu, eps, f) in enumerate(zip(self.lambdas, self.mus, self.epsilons, self.f_values)):
            closed_lambda, closed_mu = closed[k]
            rows.append({
                "stage": k + 1,
                "lambda": lam,
                "lambda_closed_form": closed_lambda,
                "mu": mu,
                "mu_closed_form": None if mu is None else closed_mu,
                "epsilon": eps,
                "f_max": f,
            })
        return rows


@dataclass(frozen=True, eq=False)
class ClassificationVerdict:
    case_label: str
    c1: float
    c2: float
    constraint_residuals: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        assert self.case_label in (FLAT_BOTH, CASE_I, INCONSISTENT), f"Unknown case label {self.case_label}"

    @property
    def consistent(self) -> bool:
        return self.case_label != INCONSISTENT

    def to_dict(self) -> Dict:
        return {
            "case_label": self.case_label,
            "c1": self.c1,
            "c2": self.c2,
            "constraint_residuals": dict(sorted(self.constraint_residuals.items())),
        }
