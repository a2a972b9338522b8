'''
Catalog of explicit Lagrangian immersions, each given by its horizontal lift.

Every evaluator maps a parameter point to the lift as a ComplexJetVector of a
requested order:
    make_totally_geodesic(n)            R^n -> C^n (flat ambient)
    make_flat_torus(n)                  (1/sqrt(n+1)) (e^(i u_1), ..., e^(i u_n), e^(-i sum u))
    make_product_immersion(n1, n2)      flat torus factor times a round S^n2
    make_legendre_curve(spec)           Legendre curve in S^3
    warped_product(lift1, lift2, curve) (gamma_1(t) psi_1(p), gamma_2(t) psi_2(q))
    calabi_point_product(lift1, n)      Calabi product of lift1 with a point

Composite evaluators hand a slice of the seed jets to their pieces, so every
piece is evaluated in the joint jet space. Evaluators are immutable and safe
to use from pool workers.

Example: the product immersion with n1 = 1, n2 = 2 at the origin of chart 0
    make_product_immersion(1, 2).sample(np.zeros(3), order=4)
'''
import copy
import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from lagrangian_audit.geometry_engine import real_inner
from lagrangian_audit.utils.classes.geometry_types import LiftSample
from lagrangian_audit.utils.classes.immersion_spec import (LEGENDRE, SPHERE_BASE, ImmersionSpec, LegendreCurveSpec, ParamPoint)
from lagrangian_audit.utils.classes.multi_jet import ComplexJetVector, JetSpace, MultiJet, exp_i_angle, get_jet_space, jet_seeds
from lagrangian_audit.utils.constants import (CALABI_POINT_PRODUCT, CHART_RADIUS, DEFAULT_JET_ORDER, FLAT_CN, FLAT_TORUS,
                                              HORIZONTAL_INPUT_LIMIT, LINE_RANGE, PRODUCT_EQ381, SPHERE_LIFT_CP, TOTALLY_GEODESIC,
                                              WARPED_PRODUCT)
from lagrangian_audit.utils.errors import ChartDomainError, InconsistencyError, SpecValidationError

logger = logging.getLogger(__name__)

TWO_PI = 2 * np.pi


def sample_angles(rng: np.random.Generator, count: int) -> np.ndarray:
    return rng.uniform(0.0, TWO_PI, count)


def sample_ball(rng: np.random.Generator, dim: int, radius: float = CHART_RADIUS) -> np.ndarray:
    """Uniform point of the open ball of the given radius."""
    if dim == 0:
        return np.zeros(0)
    direction = rng.standard_normal(dim)
    return direction / np.linalg.norm(direction) * radius * rng.uniform() ** (1.0 / dim)


class ImmersionEvaluator:
    """
    Base class of every catalog entry.

    Attributes:
        num_params: dimension of the parameter domain (= dimension of the immersed manifold)
        ambient_dim: complex dimension of the space the lift lives in
        ambient_kind: sphere_lift_cp or flat_cn
        factor_split: (n1, n2) coordinate split of the two product factors, None if not a product
        conjugate: evaluate the complex conjugate lift
    """
    kind = None
    ambient_kind = SPHERE_LIFT_CP

    def __init__(self, num_params: int, ambient_dim: int, factor_split: Optional[Tuple[int, int]] = None) -> None:
        self.num_params = num_params
        self.ambient_dim = ambient_dim
        self.factor_split = factor_split
        self.conjugate = False

    def __repr__(self) -> str:
        return f"{type(self).__name__}(num_params={self.num_params}, ambient_dim={self.ambient_dim})"

    def _jets(self, seeds: Sequence[MultiJet], space: JetSpace) -> ComplexJetVector:
        raise NotImplementedError()

    def jets(self, seeds: Sequence[MultiJet], space: JetSpace) -> ComplexJetVector:
        """The lift in terms of the given coordinate jets (one per parameter)."""
        assert len(seeds) == self.num_params, f"{self} takes {self.num_params} coordinates, got {len(seeds)}"
        lift = self._jets(seeds, space)
        return lift.conj() if self.conjugate else lift

    def lift(self, point, order: int = DEFAULT_JET_ORDER) -> ComplexJetVector:
        point = np.asarray(point, dtype=float)
        if point.shape != (self.num_params,):
            raise SpecValidationError(f"{self} expects a point with {self.num_params} coordinates, got shape {point.shape}")
        if self.num_params == 0:
            return self.jets((), get_jet_space(0, order))
        seeds = jet_seeds(point, order)
        return self.jets(seeds, seeds[0].space)

    def sample(self, point, order: int = DEFAULT_JET_ORDER) -> LiftSample:
        return LiftSample(np.asarray(point, dtype=float), self.lift(point, order), self.ambient_dim, self.ambient_kind)

    def sample_point(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError()

    def base_point(self) -> np.ndarray:
        return np.zeros(self.num_params)

    def conjugated(self) -> "ImmersionEvaluator":
        """The conjugate lift; it flips the sign of the cubic form."""
        other = copy.copy(self)
        other.conjugate = not self.conjugate
        return other


class TotallyGeodesic(ImmersionEvaluator):
    kind = TOTALLY_GEODESIC
    ambient_kind = FLAT_CN

    def __init__(self, n: int) -> None:
        super().__init__(n, n, (n, 0))

    def _jets(self, seeds, space):
        return ComplexJetVector.from_entries(list(seeds))

    def sample_point(self, rng):
        return rng.uniform(-LINE_RANGE, LINE_RANGE, self.num_params)


class FlatTorus(ImmersionEvaluator):
    kind = FLAT_TORUS

    def __init__(self, n: int) -> None:
        super().__init__(n, n + 1, (n, 0))

    def _jets(self, seeds, space):
        total = sum(seeds)
        phases = [exp_i_angle(u) for u in seeds] + [exp_i_angle(-total)]
        return ComplexJetVector.from_entries(phases) * (1.0 / np.sqrt(self.num_params + 1))

    def sample_point(self, rng):
        return sample_angles(rng, self.num_params)


class SphereChart:
    """
    Orthographic chart of the unit sphere S^dim in R^(dim+1) around a coordinate pole.
    Chart 2j has pole +e_j, chart 2j+1 has pole -e_j; y = sqrt(1 - |s|^2) p + sum_k s_k E_k
    with E_k the remaining coordinate vectors. An optional orthogonal `rotation` acts on y.
    """

    def __init__(self, dim: int, chart_id: int = 0, rotation: Optional[np.ndarray] = None) -> None:
        if not 0 <= chart_id < 2 * (dim + 1):
            raise SpecValidationError(f"Chart id {chart_id} out of range for S^{dim}")
        eye = np.eye(dim + 1)
        axis = chart_id // 2
        self.dim = dim
        self.chart_id = chart_id
        self.pole = (1.0 if chart_id % 2 == 0 else -1.0) * eye[axis]
        self.tangent = np.array([eye[j] for j in range(dim + 1) if j != axis]).reshape(dim, dim + 1)
        if rotation is None:
            rotation = eye
        rotation = np.asarray(rotation, dtype=float)
        if rotation.shape != (dim + 1, dim + 1) or np.max(np.abs(rotation.T @ rotation - eye)) > 1e-12:
            raise SpecValidationError(f"Sphere rotation must be an orthogonal {dim + 1}x{dim + 1} matrix")
        self.rotation = rotation

    def _check_domain(self, radius: float) -> None:
        if radius >= CHART_RADIUS:
            raise ChartDomainError(f"Chart {self.chart_id} coordinates of norm {radius:.6f} exceed the validity radius {CHART_RADIUS}")

    def embed(self, coords: Sequence[MultiJet]):
        """Sphere point as dim + 1 real jets."""
        self._check_domain(float(np.sqrt(sum(s.value ** 2 for s in coords))))
        root = (1.0 - sum(s * s for s in coords)).sqrt()
        pole = self.rotation @ self.pole
        tangent = self.tangent @ self.rotation.T
        out = []
        for j in range(self.dim + 1):
            entry = root * float(pole[j])
            for k, s in enumerate(coords):
                entry = entry + s * float(tangent[k, j])
            out.append(entry)
        return out

    def point(self, coords) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        self._check_domain(float(np.linalg.norm(coords)))
        y = np.sqrt(1.0 - coords @ coords) * self.pole + coords @ self.tangent
        return self.rotation @ y

    def contains(self, y) -> bool:
        local = self.rotation.T @ np.asarray(y, dtype=float)
        return local @ self.pole > 0 and np.linalg.norm(self.tangent @ local) < CHART_RADIUS

    def coordinates(self, y) -> np.ndarray:
        if not self.contains(y):
            raise ChartDomainError(f"Point {np.round(y, 6)} lies outside chart {self.chart_id}")
        return self.tangent @ (self.rotation.T @ np.asarray(y, dtype=float))


class RealSphere(ImmersionEvaluator):
    """Totally geodesic Lagrangian S^n: the real unit sphere inside C^(n+1)."""

    def __init__(self, n: int, chart_id: int = 0, rotation: Optional[np.ndarray] = None) -> None:
        super().__init__(n, n + 1, (0, n))
        self.chart = SphereChart(n, chart_id, rotation)

    def _jets(self, seeds, space):
        return ComplexJetVector.from_entries(self.chart.embed(seeds))

    def sample_point(self, rng):
        return sample_ball(rng, self.num_params)


class PointLift(ImmersionEvaluator):
    """The point 1 in C, a zero dimensional horizontal lift."""

    def __init__(self) -> None:
        super().__init__(0, 1, (0, 0))

    def _jets(self, seeds, space):
        return ComplexJetVector.constant([1.0], space.num_vars, space.order)

    def sample_point(self, rng):
        return np.zeros(0)


class PhaseCurve(ImmersionEvaluator):
    """t -> (r1 e^(i w1 t), r2 e^(i w2 t)) in S^3."""

    def __init__(self, r1: float, r2: float, w1: float, w2: float) -> None:
        super().__init__(1, 2)
        self.radii = (float(r1), float(r2))
        self.frequencies = (float(w1), float(w2))

    def _jets(self, seeds, space):
        t = seeds[0]
        (r1, r2), (w1, w2) = self.radii, self.frequencies
        return ComplexJetVector.from_entries([exp_i_angle(t * w1) * r1, exp_i_angle(t * w2) * r2])

    def sample_point(self, rng):
        return rng.uniform(-LINE_RANGE, LINE_RANGE, 1)

    def legendre_residual(self, t: float) -> float:
        """|sum_k z_k' conj(z_k)|, zero for a Legendre curve."""
        sample = self.sample([t], order=1)
        return float(abs(np.vdot(sample.lift_jet.value(), sample.derivatives.tangents[0])))


class ProductImmersion(ImmersionEvaluator):
    """
    Flat torus factor times a round sphere:
        psi = (1/sqrt(n+1)) (e^(i u_1), ..., e^(i u_n1), sqrt(n2+1) e^(i w) y),  w = -(u_1 + ... + u_n1) / (n2+1)
    with y in S^n2 given by a sphere chart.
    """
    kind = PRODUCT_EQ381

    def __init__(self, n1: int, n2: int, chart_id: int = 0, rotation: Optional[np.ndarray] = None) -> None:
        if n1 < 1 or n2 < 1:
            raise SpecValidationError(f"Product immersion needs n1 >= 1 and n2 >= 1, got {n1}, {n2}")
        super().__init__(n1 + n2, n1 + n2 + 1, (n1, n2))
        self.n1 = n1
        self.n2 = n2
        self.chart = SphereChart(n2, chart_id, rotation)

    def _jets(self, seeds, space):
        n = self.num_params
        u, s = seeds[:self.n1], seeds[self.n1:]
        w = sum(u) * (-1.0 / (self.n2 + 1))
        torus = ComplexJetVector.from_entries([exp_i_angle(x) for x in u]) * (1.0 / np.sqrt(n + 1))
        y = ComplexJetVector.from_entries(self.chart.embed(s))
        sphere = exp_i_angle(w) * y * np.sqrt((self.n2 + 1) / (n + 1))
        return ComplexJetVector.concat([torus, sphere])

    def sample_point(self, rng):
        return np.concatenate([sample_angles(rng, self.n1), sample_ball(rng, self.n2)])

    def param_point(self, point) -> ParamPoint:
        return ParamPoint.from_array(point, self.n1, self.chart.chart_id)

    def in_chart(self, param_point: ParamPoint, chart_id: int) -> Tuple["ProductImmersion", np.ndarray]:
        """The same geometric point expressed in another sphere chart."""
        other = ProductImmersion(self.n1, self.n2, chart_id, self.chart.rotation)
        other.conjugate = self.conjugate
        y = self.chart.point(param_point.sphere_coords)
        return other, ParamPoint(param_point.torus_coords, other.chart.coordinates(y), chart_id).as_array()


def _check_horizontal_input(evaluator: ImmersionEvaluator) -> None:
    sample = evaluator.sample(evaluator.base_point(), order=1)
    value = sample.lift_jet.value()
    residual = abs(np.linalg.norm(value) - 1.0)
    if evaluator.num_params:
        tangents = sample.derivatives.tangents
        residual = max(residual, float(np.max(np.abs(real_inner(tangents, 1j * value[None, :])))))
    if residual > HORIZONTAL_INPUT_LIMIT:
        raise InconsistencyError(f"{evaluator} is not a horizontal unit lift (residual {residual:.3e})")


class WarpedProduct(ImmersionEvaluator):
    """(t, p, q) -> (gamma_1(t) psi_1(p), gamma_2(t) psi_2(q)) for a curve gamma in S^3."""
    kind = WARPED_PRODUCT

    def __init__(self, lift1: ImmersionEvaluator, lift2: ImmersionEvaluator, curve: PhaseCurve) -> None:
        for lift in (lift1, lift2):
            _check_horizontal_input(lift)
        super().__init__(1 + lift1.num_params + lift2.num_params, lift1.ambient_dim + lift2.ambient_dim)
        self.lift1 = lift1
        self.lift2 = lift2
        self.curve = curve

    def _jets(self, seeds, space):
        k1 = self.lift1.num_params
        gamma = self.curve.jets(seeds[:1], space)
        first = ComplexJetVector(space, gamma.real[:1], gamma.imag[:1])
        second = ComplexJetVector(space, gamma.real[1:], gamma.imag[1:])
        return ComplexJetVector.concat([first * self.lift1.jets(seeds[1:1 + k1], space),
                                        second * self.lift2.jets(seeds[1 + k1:], space)])

    def sample_point(self, rng):
        return np.concatenate([self.curve.sample_point(rng), self.lift1.sample_point(rng), self.lift2.sample_point(rng)])


class CalabiPointProduct(ImmersionEvaluator):
    """
    (t, p) -> (sqrt(n/(n+1)) e^(i t/(n+1)) psi_1(p), sqrt(1/(n+1)) e^(-i n t/(n+1)))
    for a horizontal lift psi_1 into S^(2n-1). The curve direction is the first coordinate.
    """
    kind = CALABI_POINT_PRODUCT

    def __init__(self, lift1: ImmersionEvaluator) -> None:
        _check_horizontal_input(lift1)
        first, second = lift1.factor_split or (lift1.num_params, 0)
        super().__init__(1 + lift1.num_params, lift1.ambient_dim + 1, (first + 1, second))
        self.lift1 = lift1

    def _jets(self, seeds, space):
        n = self.lift1.ambient_dim
        t = seeds[0]
        inner = self.lift1.jets(seeds[1:], space)
        first = exp_i_angle(t * (1.0 / (n + 1))) * inner * np.sqrt(n / (n + 1))
        last = exp_i_angle(t * (-n / (n + 1))) * np.sqrt(1.0 / (n + 1))
        return ComplexJetVector.concat([first, last])

    def sample_point(self, rng):
        return np.concatenate([sample_angles(rng, 1), self.lift1.sample_point(rng)])


def make_totally_geodesic(n: int) -> TotallyGeodesic:
    if n < 1:
        raise SpecValidationError(f"Totally geodesic immersion needs n >= 1, got {n}")
    return TotallyGeodesic(n)


def make_flat_torus(n: int) -> FlatTorus:
    if n < 1:
        raise SpecValidationError(f"Flat torus needs n >= 1, got {n}")
    return FlatTorus(n)


def make_product_immersion(n1: int, n2: int, chart_id: int = 0, rotation: Optional[np.ndarray] = None,
                           conjugate: bool = False) -> ProductImmersion:
    product = ProductImmersion(n1, n2, chart_id, rotation)
    return product.conjugated() if conjugate else product


def make_legendre_curve(spec: LegendreCurveSpec) -> PhaseCurve:
    return PhaseCurve(spec.r1, spec.r2, spec.r2 / spec.r1 * spec.a, -spec.r1 / spec.r2 * spec.a)


def make_phase_curve(r1: float, r2: float) -> PhaseCurve:
    """The non-Legendre curve (r1 e^(it), r2 e^(it)); only used as a broken input."""
    return PhaseCurve(r1, r2, 1.0, 1.0)


def warped_product(lift1: ImmersionEvaluator, lift2: ImmersionEvaluator, curve: PhaseCurve) -> WarpedProduct:
    return WarpedProduct(lift1, lift2, curve)


def calabi_point_product(lift1: ImmersionEvaluator, n: Optional[int] = None) -> CalabiPointProduct:
    if n is not None and n != lift1.ambient_dim:
        raise SpecValidationError(f"Calabi product with a point needs a lift into C^{n}, got C^{lift1.ambient_dim}")
    return CalabiPointProduct(lift1)


def iterated_calabi_product(base: ImmersionEvaluator, times: int) -> ImmersionEvaluator:
    """Apply calabi_point_product `times` times; the newest curve parameter comes first."""
    lift = base
    for _ in range(times):
        lift = calabi_point_product(lift)
    return lift


def build_evaluator(spec: ImmersionSpec) -> ImmersionEvaluator:
    if spec.kind == TOTALLY_GEODESIC:
        evaluator = make_totally_geodesic(spec.n)
    elif spec.kind == FLAT_TORUS:
        evaluator = make_flat_torus(spec.n)
    elif spec.kind == PRODUCT_EQ381:
        evaluator = make_product_immersion(spec.n1, spec.n2, chart_id=spec.sphere_chart)
    elif spec.kind == WARPED_PRODUCT:
        constants = spec.constants
        if constants["curve"] == LEGENDRE:
            curve = make_legendre_curve(spec.legendre_spec())
        else:
            curve = make_phase_curve(constants["r1"], constants["r2"])
        lift2 = PointLift() if spec.n2 == 0 else RealSphere(spec.n2)
        evaluator = warped_product(RealSphere(spec.n1), lift2, curve)
    elif spec.kind == CALABI_POINT_PRODUCT:
        if spec.constants.get("base", SPHERE_BASE) == SPHERE_BASE:
            base = RealSphere(spec.n2, spec.sphere_chart)
        else:
            base = make_flat_torus(spec.n2)
        evaluator = iterated_calabi_product(base, spec.n1)
    else:
        raise SpecValidationError(f"Unknown immersion kind {spec.kind}")
    logger.debug(f"Built {evaluator} for {spec.kind}")
    return evaluator.conjugated() if spec.conjugated else evaluator
