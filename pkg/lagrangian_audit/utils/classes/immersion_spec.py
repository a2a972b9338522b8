"""Immersion and audit configuration, parsed from JSON spec files"""
from dataclasses import asdict, dataclass, field, replace
from numbers import Integral, Real
from typing import Dict, List, Optional

import numpy as np
import ujson

from lagrangian_audit.utils.constants import (CALABI_POINT_PRODUCT, CHART_RADIUS, DEFAULT_FORMAT, DEFAULT_JET_ORDER, DEFAULT_SAMPLES,
                                              DEFAULT_SEED, FLAT_TORUS, FORMATS, KIND_SCHEMAS, KINDS, PRODUCT_EQ381, TOLERANCE_TIERS,
                                              TOTALLY_GEODESIC, WARPED_PRODUCT)
from lagrangian_audit.utils.errors import ChartDomainError, SpecParseError, SpecValidationError

IMMERSION_KEYS = ["kind", "n", "n1", "n2", "c_tilde", "sign_choices", "sphere_chart", "constants"]
AUDIT_KEYS = ["sample_count", "seed", "jet_order", "tolerances", "output_format"]
LEGENDRE = "legendre"
NON_LEGENDRE = "non_legendre"
SPHERE_BASE = "sphere"
TORUS_BASE = "flat_torus"
UNIT_CIRCLE_LIMIT = TOLERANCE_TIERS["lift"]


@dataclass(frozen=True)
class LegendreCurveSpec:
    """Constants of the curve t -> (r1 e^(i (r2/r1) a t), r2 e^(-i (r1/r2) a t)) in S^3"""
    r1: float
    r2: float
    a: float

    def __post_init__(self):
        if min(self.r1, self.r2, self.a) <= 0:
            raise SpecValidationError(f"Legendre constants must be positive, got r1={self.r1}, r2={self.r2}, a={self.a}")
        if abs(self.r1 ** 2 + self.r2 ** 2 - 1) > UNIT_CIRCLE_LIMIT:
            raise SpecValidationError(f"Legendre constants need r1^2 + r2^2 = 1, got {self.r1 ** 2 + self.r2 ** 2:.16f}")

    @classmethod
    def minimal_calabi(cls, n1: int, n2: int) -> "LegendreCurveSpec":
        """Constants of the minimal Calabi product of S^n1 and S^n2 (a point when n2 = 0)."""
        n = n1 + n2 + 1
        return cls(r1=float(np.sqrt((n1 + 1) / (n + 1))), r2=float(np.sqrt((n2 + 1) / (n + 1))),
                   a=float(np.sqrt((n1 + 1) * (n2 + 1)) / (n + 1)))


@dataclass(frozen=True, eq=False)
class ParamPoint:
    """A parameter point of the product immersion: torus angles, then sphere chart coordinates"""
    torus_coords: np.ndarray
    sphere_coords: np.ndarray
    chart_id: int = 0

    def __post_init__(self):
        radius = float(np.linalg.norm(self.sphere_coords))
        if radius >= CHART_RADIUS:
            raise ChartDomainError(f"Sphere chart coordinates of norm {radius:.6f} leave the chart of radius {CHART_RADIUS}")

    def as_array(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.torus_coords, dtype=float), np.asarray(self.sphere_coords, dtype=float)])

    @classmethod
    def from_array(cls, point, n1: int, chart_id: int = 0) -> "ParamPoint":
        point = np.asarray(point, dtype=float)
        return cls(point[:n1], point[n1:], chart_id)


@dataclass(frozen=True)
class ImmersionSpec:
    kind: str
    n: int
    n1: int
    n2: int
    c_tilde: int
    sign_choices: List[int]
    sphere_chart: int = 0
    constants: Dict = field(default_factory=dict)

    @property
    def conjugated(self) -> bool:
        """Uniform +1 signs are realized by the complex conjugate lift."""
        return len(self.sign_choices) > 0 and self.sign_choices[0] == 1

    @property
    def expected_c1(self) -> float:
        return 0.0

    @property
    def expected_c2(self) -> Optional[float]:
        if self.kind in (PRODUCT_EQ381, CALABI_POINT_PRODUCT) and self.constants.get("base", SPHERE_BASE) == SPHERE_BASE:
            # a circle factor has no 2-planes, so the whole product is flat
            if self.n2 < 2:
                return 0.0
            return (self.n + 1) / (self.n2 + 1) * self.c_tilde
        if self.kind in (TOTALLY_GEODESIC, FLAT_TORUS) or self.constants.get("base") == TORUS_BASE:
            return 0.0
        return None

    def legendre_spec(self) -> LegendreCurveSpec:
        return LegendreCurveSpec(self.constants["r1"], self.constants["r2"], self.constants["a"])

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass(frozen=True)
class AuditConfig:
    spec: ImmersionSpec
    sample_count: int = DEFAULT_SAMPLES
    seed: int = DEFAULT_SEED
    jet_order: int = DEFAULT_JET_ORDER
    tolerances: Dict[str, float] = field(default_factory=lambda: dict(TOLERANCE_TIERS))
    output_format: str = DEFAULT_FORMAT

    def __post_init__(self):
        if self.sample_count < 1:
            raise SpecValidationError(f"sample_count must be >= 1, got {self.sample_count}")
        if self.jet_order not in (3, 4):
            raise SpecValidationError(f"jet_order must be 3 or 4, got {self.jet_order}")
        if not 0 <= self.seed < 2 ** 64:
            raise SpecValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        for tier, value in self.tolerances.items():
            if tier not in TOLERANCE_TIERS:
                raise SpecParseError(f"$.tolerances.{tier}", "unknown tolerance tier")
            if not value > 0:
                raise SpecValidationError(f"Tolerance for tier {tier} must be positive, got {value}")
        if self.output_format not in FORMATS:
            raise SpecValidationError(f"output_format must be one of {FORMATS}, got {self.output_format}")

    def with_overrides(self, samples=None, seed=None, order=None, tolerances=None, output_format=None) -> "AuditConfig":
        """Command line values take precedence over the spec file."""
        merged = dict(self.tolerances)
        merged.update(tolerances or {})
        return replace(
            self,
            sample_count=self.sample_count if samples is None else int(samples),
            seed=self.seed if seed is None else int(seed),
            jet_order=self.jet_order if order is None else int(order),
            tolerances=merged,
            output_format=self.output_format if output_format is None else output_format,
        )

    def to_dict(self) -> Dict:
        return {
            "spec": self.spec.to_dict(),
            "sample_count": self.sample_count,
            "seed": self.seed,
            "jet_order": self.jet_order,
            "tolerances": dict(sorted(self.tolerances.items())),
            "output_format": self.output_format,
        }


def _expect_int(value, path) -> int:
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise SpecParseError(path, f"expected an integer, got {value!r}")
    return int(value)


def _expect_real(value, path) -> float:
    if isinstance(value, bool) or not isinstance(value, Real):
        raise SpecParseError(path, f"expected a number, got {value!r}")
    return float(value)


def _expect_str(value, path, choices) -> str:
    if not isinstance(value, str):
        raise SpecParseError(path, f"expected a string, got {value!r}")
    if value not in choices:
        raise SpecParseError(path, f"expected one of {choices}, got {value!r}")
    return value


def _reject_unknown(obj: Dict, allowed, prefix: str) -> None:
    for key in obj:
        if key not in allowed:
            raise SpecParseError(f"{prefix}.{key}", "unknown key")


def _parse_constants(kind: str, raw, n1: int, n2: int) -> Dict:
    if not isinstance(raw, dict):
        raise SpecParseError("$.constants", f"expected an object, got {raw!r}")
    allowed = KIND_SCHEMAS[kind]["constants"]
    _reject_unknown(raw, allowed, "$.constants")
    if kind == WARPED_PRODUCT:
        defaults = LegendreCurveSpec.minimal_calabi(n1, n2)
        constants = {
            "r1": _expect_real(raw.get("r1", defaults.r1), "$.constants.r1"),
            "r2": _expect_real(raw.get("r2", defaults.r2), "$.constants.r2"),
            "a": _expect_real(raw.get("a", defaults.a), "$.constants.a"),
            "curve": _expect_str(raw.get("curve", LEGENDRE), "$.constants.curve", [LEGENDRE, NON_LEGENDRE]),
        }
        LegendreCurveSpec(constants["r1"], constants["r2"], constants["a"])
        return constants
    if kind == CALABI_POINT_PRODUCT:
        return {"base": _expect_str(raw.get("base", SPHERE_BASE), "$.constants.base", [SPHERE_BASE, TORUS_BASE])}
    return {}


def _dimensions(kind: str, raw: Dict):
    n = _expect_int(raw["n"], "$.n") if "n" in raw else None
    n1 = _expect_int(raw["n1"], "$.n1") if "n1" in raw else None
    n2 = _expect_int(raw["n2"], "$.n2") if "n2" in raw else None
    if kind in (TOTALLY_GEODESIC, FLAT_TORUS):
        if n is None:
            raise SpecParseError("$.n", f"required for {kind}")
        if n < 1:
            raise SpecValidationError(f"{kind} needs n >= 1, got {n}")
        if (n1 or 0, n2 or 0) not in ((0, 0), (n, 0)):
            raise SpecValidationError(f"{kind} takes only n; got n1={n1}, n2={n2} for n={n}")
        return n, n, 0
    for name, value in (("n1", n1), ("n2", n2)):
        if value is None:
            raise SpecParseError(f"$.{name}", f"required for {kind}")
    minimum_n2 = 0 if kind == WARPED_PRODUCT else 1
    if n1 < 1 or n2 < minimum_n2:
        raise SpecValidationError(f"{kind} needs n1 >= 1 and n2 >= {minimum_n2}, got n1={n1}, n2={n2}")
    total = n1 + n2 + (1 if kind == WARPED_PRODUCT else 0)
    if n is not None and n != total:
        raise SpecValidationError(f"n = {n} does not match the factor dimensions of {kind} (expected {total})")
    return total, n1, n2


def build_immersion_spec(raw: Dict) -> ImmersionSpec:
    if "kind" not in raw:
        raise SpecParseError("$.kind", "required")
    kind = _expect_str(raw["kind"], "$.kind", KINDS)
    n, n1, n2 = _dimensions(kind, raw)

    required_c = KIND_SCHEMAS[kind]["c_tilde"]
    c_tilde = raw.get("c_tilde", required_c)
    if isinstance(c_tilde, bool) or not isinstance(c_tilde, Real):
        raise SpecParseError("$.c_tilde", f"expected 0 or 1, got {c_tilde!r}")
    if c_tilde != required_c:
        raise SpecValidationError(f"{kind} requires c_tilde = {required_c}, got {c_tilde}")

    stages = n1 if kind != WARPED_PRODUCT else 0
    signs = raw.get("sign_choices", [-1] * stages)
    if not isinstance(signs, list):
        raise SpecParseError("$.sign_choices", f"expected a list, got {signs!r}")
    signs = [_expect_int(s, f"$.sign_choices[{i}]") for i, s in enumerate(signs)]
    if any(s not in (-1, 1) for s in signs):
        raise SpecValidationError(f"sign_choices entries must be +1 or -1, got {signs}")
    if stages and len(signs) != stages:
        raise SpecValidationError(f"sign_choices needs {stages} entries, got {len(signs)}")
    if len(set(signs)) > 1:
        raise SpecValidationError(f"Only uniform sign choices are realizable (conjugate lift), got {signs}")

    constants = _parse_constants(kind, raw.get("constants", {}), n1, n2)
    chart = _expect_int(raw.get("sphere_chart", 0), "$.sphere_chart")
    uses_chart = kind == PRODUCT_EQ381 or constants.get("base") == SPHERE_BASE
    chart_count = 2 * (n2 + 1) if uses_chart else 1
    if not 0 <= chart < chart_count:
        raise SpecValidationError(f"sphere_chart must be in [0, {chart_count}), got {chart}")
    return ImmersionSpec(kind=kind, n=n, n1=n1, n2=n2, c_tilde=int(c_tilde), sign_choices=signs, sphere_chart=chart, constants=constants)


def build_audit_config(raw: Dict) -> AuditConfig:
    if not isinstance(raw, dict):
        raise SpecParseError("$", f"expected an object, got {type(raw).__name__}")
    _reject_unknown(raw, IMMERSION_KEYS + AUDIT_KEYS, "$")
    spec = build_immersion_spec({k: v for k, v in raw.items() if k in IMMERSION_KEYS})
    tolerances = dict(TOLERANCE_TIERS)
    raw_tolerances = raw.get("tolerances", {})
    if not isinstance(raw_tolerances, dict):
        raise SpecParseError("$.tolerances", f"expected an object, got {raw_tolerances!r}")
    _reject_unknown(raw_tolerances, TOLERANCE_TIERS, "$.tolerances")
    for tier, value in raw_tolerances.items():
        tolerances[tier] = _expect_real(value, f"$.tolerances.{tier}")
    output_format = raw.get("output_format", DEFAULT_FORMAT)
    if not isinstance(output_format, str):
        raise SpecParseError("$.output_format", f"expected a string, got {output_format!r}")
    return AuditConfig(
        spec=spec,
        sample_count=_expect_int(raw.get("sample_count", DEFAULT_SAMPLES), "$.sample_count"),
        seed=_expect_int(raw.get("seed", DEFAULT_SEED), "$.seed"),
        jet_order=_expect_int(raw.get("jet_order", DEFAULT_JET_ORDER), "$.jet_order"),
        tolerances=tolerances,
        output_format=output_format,
    )


def parse_spec(contents: str) -> AuditConfig:
    """Parse the text of a spec file into a validated AuditConfig with defaults filled in."""
    try:
        raw = ujson.loads(contents)
    except ValueError as e:
        raise SpecParseError("$", f"invalid JSON ({e})")
    return build_audit_config(raw)


def load_spec_file(filename: str) -> AuditConfig:
    with open(filename, "r", encoding="utf-8") as f:
        return parse_spec(f.read())
