from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import numpy as np

from lagrangian_audit.utils.classes.multi_jet import ComplexJetVector, JetSpace, MultiJet
from lagrangian_audit.utils.constants import FLAT_CN, SPHERE_LIFT_CP
from lagrangian_audit.utils.errors import JetArgumentError, JetTruncationError


def _real_inner(space: JetSpace, ar, ai, br, bi) -> np.ndarray:
    # Re sum_k a_k conj(b_k), summed over the ambient axis (second to last)
    return (space.multiply(ar, br) + space.multiply(ai, bi)).sum(axis=-2)


def _real_inner_with_i(space: JetSpace, ar, ai, br, bi) -> np.ndarray:
    # Re <a, i b> = Im sum_k a_k conj(b_k)
    return (space.multiply(ai, br) - space.multiply(ar, bi)).sum(axis=-2)


class LiftDerivatives:
    """
    Coordinate derivatives of a lift jet, and the scalar jet fields built from them:
    the metric g_ij = Re<d_i psi, d_j psi>, the cubic form
    sigma_ijk = Re<d_i d_j psi, i d_k psi> and the normal connection coefficients
    Re<d_l d_k psi, d_m psi> (N_k = i d_k psi is a normal frame field).
    """

    def __init__(self, lift_jet: ComplexJetVector) -> None:
        self.order = lift_jet.order
        self.n = lift_jet.num_vars
        self.value = lift_jet.value()
        first = [lift_jet.derivative(i) for i in range(self.n)]
        self.first_space = first[0].space
        self.first_real = np.array([d.real for d in first])
        self.first_imag = np.array([d.imag for d in first])
        self.tangents = self.first_real[..., 0] + 1j * self.first_imag[..., 0]
        self.second_space = None
        if self.order >= 2:
            second = [[first[i].derivative(j) for j in range(self.n)] for i in range(self.n)]
            self.second_space = second[0][0].space
            self.second_real = np.array([[d.real for d in row] for row in second])
            self.second_imag = np.array([[d.imag for d in row] for row in second])
            self.second = self.second_real[..., 0] + 1j * self.second_imag[..., 0]

    @cached_property
    def metric_coeffs(self) -> np.ndarray:
        """(n, n, size) coefficients of g_ij as jets of order - 1."""
        ar, ai = self.first_real[:, None], self.first_imag[:, None]
        br, bi = self.first_real[None, :], self.first_imag[None, :]
        return _real_inner(self.first_space, ar, ai, br, bi)

    def _require_second(self) -> None:
        if self.second_space is None:
            raise JetTruncationError(f"Second derivative fields need order >= 2, got {self.order}")

    def _first_truncated(self) -> Tuple[np.ndarray, np.ndarray]:
        size = self.second_space.size
        return self.first_real[..., :size], self.first_imag[..., :size]

    @cached_property
    def cubic_coeffs(self) -> np.ndarray:
        """(n, n, n, size) coefficients of sigma_ijk as jets of order - 2."""
        self._require_second()
        fr, fi = self._first_truncated()
        ar, ai = self.second_real[:, :, None], self.second_imag[:, :, None]
        br, bi = fr[None, None, :], fi[None, None, :]
        return _real_inner_with_i(self.second_space, ar, ai, br, bi)

    @cached_property
    def normal_connection_coeffs(self) -> np.ndarray:
        """(m, l, k, size) coefficients of Re<d_l d_k psi, d_m psi>."""
        self._require_second()
        fr, fi = self._first_truncated()
        ar, ai = self.second_real[None, :, :], self.second_imag[None, :, :]
        br, bi = fr[:, None, None], fi[:, None, None]
        return _real_inner(self.second_space, ar, ai, br, bi)


@dataclass(frozen=True, eq=False)
class LiftSample:
    param_point: np.ndarray
    lift_jet: ComplexJetVector
    ambient_dim: int
    ambient_kind: str

    def __post_init__(self):
        if self.ambient_kind not in (SPHERE_LIFT_CP, FLAT_CN):
            raise JetArgumentError(f"Unknown ambient kind {self.ambient_kind}")
        if self.lift_jet.dim != self.ambient_dim:
            raise JetArgumentError(f"Lift has dimension {self.lift_jet.dim}, expected {self.ambient_dim}")
        if len(self.param_point) != self.lift_jet.num_vars:
            raise JetArgumentError(f"Point has {len(self.param_point)} coordinates for a jet in {self.lift_jet.num_vars} variables")

    @property
    def n(self) -> int:
        return self.lift_jet.num_vars

    @property
    def order(self) -> int:
        return self.lift_jet.order

    @property
    def c_tilde(self) -> float:
        return 1.0 if self.ambient_kind == SPHERE_LIFT_CP else 0.0

    @cached_property
    def derivatives(self) -> LiftDerivatives:
        return LiftDerivatives(self.lift_jet)


@dataclass(frozen=True, eq=False)
class FrameData:
    tangent_vectors: np.ndarray     # (n, dim) complex, d psi(d_i)
    orthonormal_frame: np.ndarray   # (n, dim) complex, e_a
    metric: np.ndarray              # (n, n)
    frame_change: np.ndarray        # (n, n), e_a = sum_i frame_change[i, a] d_i
    split: Optional[Tuple[int, int]] = None

    @property
    def n(self) -> int:
        return self.metric.shape[0]

    def to_frame(self, tensor: np.ndarray) -> np.ndarray:
        """Express a covariant coordinate tensor in the orthonormal frame."""
        out = tensor
        for axis in range(tensor.ndim):
            out = np.moveaxis(np.tensordot(out, self.frame_change, axes=([axis], [0])), -1, axis)
        return out

    def coordinate_directions(self) -> np.ndarray:
        """Column i holds the orthonormal components of d_i."""
        return np.linalg.inv(self.frame_change)

    def factor_bases(self, split: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
        """Orthonormal bases (as rows) of the two factor distributions in frame components."""
        n1, n2 = split
        assert n1 + n2 == self.n, f"Split {split} does not match dimension {self.n}"
        if self.split == tuple(split):
            eye = np.eye(self.n)
            return eye[:n1], eye[n1:]
        directions = self.coordinate_directions()
        first = np.linalg.qr(directions[:, :n1])[0].T if n1 > 0 else np.zeros((0, self.n))
        if n2 == 0:
            return first, np.zeros((0, self.n))
        projected = directions[:, n1:] - first.T @ (first @ directions[:, n1:])
        return first, np.linalg.qr(projected)[0].T


@dataclass(frozen=True, eq=False)
class ShapeTensor:
    C: np.ndarray
    asymmetry: float = 0.0

    @property
    def n(self) -> int:
        return self.C.shape[0]

    def shape_operator(self, c: int) -> np.ndarray:
        """Matrix of A_{J e_c}; entry (a, b) is <A_{J e_c} e_b, e_a>."""
        return self.C[:, :, c]

    def shape_operator_along(self, u: np.ndarray) -> np.ndarray:
        return np.einsum('abc,c->ab', self.C, u)

    def cubic(self, u: np.ndarray, v: np.ndarray = None, w: np.ndarray = None) -> float:
        v = u if v is None else v
        w = u if w is None else w
        return float(np.einsum('abc,a,b,c->', self.C, u, v, w))

    def restricted(self, basis: np.ndarray) -> np.ndarray:
        """Components on the span of the rows of `basis`."""
        return np.einsum('abc,ia,jb,kc->ijk', self.C, basis, basis, basis)

    def trace_vector(self) -> np.ndarray:
        return np.einsum('aab->b', self.C)

    def perturbed(self, index: Tuple[int, int, int], amount: float) -> "ShapeTensor":
        C = np.array(self.C)
        C[index] += amount
        return ShapeTensor(C, self.asymmetry)


@dataclass(frozen=True, eq=False)
class CurvatureData:
    metric_jets: np.ndarray              # (n, n, size) coefficients of g_ij
    metric_space: JetSpace
    christoffels: np.ndarray             # [k, i, j] = Gamma^k_ij
    christoffel_derivatives: np.ndarray  # [m, k, i, j] = d_m Gamma^k_ij
    riemann_coordinate: np.ndarray       # [i, j, k, l] = <R(d_i, d_j) d_k, d_l>
    riemann: np.ndarray                  # orthonormal frame components
    normal_riemann: np.ndarray           # <R_perp(e_a, e_b) J e_c, J e_d>
    nabla_h: Optional[np.ndarray] = None
    nabla2_h: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.riemann.shape[0]

    def metric_jet(self, i: int, j: int) -> MultiJet:
        return MultiJet(self.metric_space, self.metric_jets[i, j])

    def sectional_curvature(self, u: np.ndarray, v: np.ndarray) -> float:
        """K of the plane spanned by orthonormal-frame vectors u, v."""
        numerator = np.einsum('abcd,a,b,c,d->', self.riemann, u, v, v, u)
        area = np.dot(u, u) * np.dot(v, v) - np.dot(u, v) ** 2
        return float(numerator / area)


@dataclass(eq=False)
class PointGeometry:
    """Everything the geometry engine measured at one point; filled in order until `error` is set."""
    frame: Optional[FrameData] = None
    ambient: Optional[dict] = None
    shape: Optional[ShapeTensor] = None
    minimality: Optional[float] = None
    curv: Optional[CurvatureData] = None
    nabla_h_max: Optional[float] = None
    structural: Optional[dict] = None
    profile: Optional[object] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None
