from functools import wraps

from lagrangian_audit.utils.errors import JetArgumentError, JetTruncationError

MAX_JET_ORDER = 4

SPHERE_LIFT_CP = "sphere_lift_cp"
FLAT_CN = "flat_cn"

TOTALLY_GEODESIC = "totally_geodesic"
FLAT_TORUS = "flat_torus"
PRODUCT_EQ381 = "product_eq381"
WARPED_PRODUCT = "warped_product"
CALABI_POINT_PRODUCT = "calabi_point_product"
KINDS = [TOTALLY_GEODESIC, FLAT_TORUS, PRODUCT_EQ381, WARPED_PRODUCT, CALABI_POINT_PRODUCT]

FLAT_BOTH = "flat_both"
CASE_I = "case_i"
INCONSISTENT = "inconsistent"

# sphere chart coordinates must stay inside this ball
CHART_RADIUS = 0.9
# parameter range for the non-periodic directions (real slice, curve parameter)
LINE_RANGE = 1.0

METRIC_CONDITION_LIMIT = 1e8
SYMMETRY_LIMIT = 1e-8
NULL_FORM_LIMIT = 1e-10
STATIONARITY_LIMIT = 1e-10
EIGEN_CLUSTER_LIMIT = 1e-6
STRUCTURE_LIMIT = 1e-7
HORIZONTAL_INPUT_LIMIT = 1e-8

DEFAULT_SAMPLES = 100
DEFAULT_SEED = 42
DEFAULT_JET_ORDER = 4
DEFAULT_RESTARTS = 32
DEFAULT_PLANES = 64
DEFAULT_FORMAT = "json"
FORMATS = ["json", "markdown"]

TOLERANCE_TIERS = {
    "lift": 1e-12,
    "ambient": 1e-10,
    "symmetry": 1e-10,
    "minimality": 1e-9,
    "third_order": 1e-8,
    "curvature": 1e-8,
    "fourth_order": 1e-7,
    "frame": 1e-7,
}

# check name -> tier; the order here is the order checks appear in reports
CHECK_TIERS = [
    ("ambient.unit_norm", "ambient"),
    ("ambient.horizontality", "ambient"),
    ("ambient.lagrangian_form", "ambient"),
    ("cubic_form.symmetry", "symmetry"),
    ("minimality", "minimality"),
    ("gauss", "third_order"),
    ("codazzi", "third_order"),
    ("ricci_equation", "third_order"),
    ("tsinghua", "third_order"),
    ("ricci_identity", "fourth_order"),
    ("nabla_h", "third_order"),
    ("curvature.factor1_constancy", "curvature"),
    ("curvature.factor2_constancy", "curvature"),
    ("curvature.mixed", "curvature"),
    ("curvature.c2_closed_form", "curvature"),
    ("curvature.c1c2_gate", "curvature"),
    ("frame.mixed_block", "frame"),
    ("frame.isotropy", "frame"),
    ("frame.mu_square_sum", "frame"),
    ("frame.yy_block", "frame"),
    ("frame.lower_triangular", "frame"),
    ("frame.trace", "frame"),
    ("frame.quadratic", "frame"),
    ("frame.spectral_recursion", "frame"),
    ("frame.closed_form_lambda", "frame"),
    ("frame.stage_ordering", "frame"),
    ("frame.mixed_curvature", "frame"),
    ("frame.sphere_curvature", "frame"),
    ("frame.calabi_point", "frame"),
    ("classification", "count"),
    ("pipeline.point_errors", "count"),
]

KIND_SCHEMAS = {
    TOTALLY_GEODESIC: {
        "description": "real slice R^n of C^n (flat ambient)",
        "required": ["n"], "c_tilde": 0, "constants": {},
    },
    FLAT_TORUS: {
        "description": "Lagrangian flat torus in CP^n(4)",
        "required": ["n"], "c_tilde": 1, "constants": {},
    },
    PRODUCT_EQ381: {
        "description": "flat torus factor times round sphere S^n2 in CP^(n1+n2)(4)",
        "required": ["n1", "n2"], "c_tilde": 1, "constants": {},
    },
    WARPED_PRODUCT: {
        "description": "warped product of real spheres S^n1, S^n2 (or a point if n2 = 0) along a curve in S^3",
        "required": ["n1", "n2"], "c_tilde": 1,
        "constants": {"r1": "float", "r2": "float", "a": "float", "curve": "legendre | non_legendre"},
    },
    CALABI_POINT_PRODUCT: {
        "description": "n1 iterated Calabi products with a point, starting from S^n2 or the flat torus T^n2",
        "required": ["n1", "n2"], "c_tilde": 1, "constants": {"base": "sphere | flat_torus"},
    },
}

# spec dictionaries audited by `audit-all`
AUDIT_ALL_PRESETS = [
    {"kind": TOTALLY_GEODESIC, "n": 3},
    {"kind": FLAT_TORUS, "n": 1},
    {"kind": FLAT_TORUS, "n": 2},
    {"kind": FLAT_TORUS, "n": 3},
    {"kind": FLAT_TORUS, "n": 5},
    {"kind": PRODUCT_EQ381, "n1": 1, "n2": 1},
    {"kind": PRODUCT_EQ381, "n1": 1, "n2": 2},
    {"kind": PRODUCT_EQ381, "n1": 2, "n2": 2},
    {"kind": PRODUCT_EQ381, "n1": 1, "n2": 3},
    {"kind": PRODUCT_EQ381, "n1": 3, "n2": 2},
    {"kind": PRODUCT_EQ381, "n1": 2, "n2": 3},
    {"kind": CALABI_POINT_PRODUCT, "n1": 2, "n2": 2},
    {"kind": WARPED_PRODUCT, "n1": 2, "n2": 0},
]


def check_jet_order(minimum):
    """Reject samples whose lift jet is truncated below `minimum`."""
    def decorator(func):
        @wraps(func)
        def wrapper_check_order(sample, *args, **kwargs):
            if sample.order < minimum:
                raise JetTruncationError(f"{func.__name__} needs jets of order {minimum}, got {sample.order}")
            return func(sample, *args, **kwargs)
        return wrapper_check_order
    return decorator


def check_same_space(func):
    @wraps(func)
    def wrapper_check_space(obj, other, *args, **kwargs):
        space = getattr(other, "space", None)
        if space is not None and (space.num_vars, space.order) != (obj.space.num_vars, obj.space.order):
            raise JetArgumentError(f"Jets live in different spaces: {obj.space} versus {space}")
        return func(obj, other, *args, **kwargs)
    return wrapper_check_space
