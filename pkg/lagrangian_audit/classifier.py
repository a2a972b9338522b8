'''
Adapted frame reconstruction and the case verdict.

The frame is rebuilt pointwise by repeated maximization of f(u) = C(u, u, u)
over unit vectors of the first factor: X_1 maximizes f on the whole factor,
X_2 on the part orthogonal to X_1 and so on. After each stage the shape
operator A_{J X_k} restricted to the remaining directions must be a multiple
mu_k of the identity. The measured (lambda_kk, mu_k) are checked against the
lower triangular form of A_J, the trace and quadratic relations and their
closed forms, and the sectional curvature profile decides the case:
flat_both (c1 = c2 = 0), case_i (c1 = 0, c2 = (n + 1) / (n2 + 1)) or
inconsistent.
'''
import logging
from typing import Dict, Optional, Tuple

import numpy as np

from lagrangian_audit.utils.classes.adapted_frame import AdaptedFrame, ClassificationVerdict, CurvatureProfile, closed_form_spectrum
from lagrangian_audit.utils.classes.geometry_types import CurvatureData, ShapeTensor
from lagrangian_audit.utils.constants import (CASE_I, DEFAULT_RESTARTS, DEFAULT_SEED, EIGEN_CLUSTER_LIMIT, FLAT_BOTH, INCONSISTENT,
                                              NULL_FORM_LIMIT, STATIONARITY_LIMIT, STRUCTURE_LIMIT, TOLERANCE_TIERS)
from lagrangian_audit.utils.errors import NotASpaceFormProductError, NullFormSignal, StructureViolationError

logger = logging.getLogger(__name__)

GRADIENT_LIMIT = 1e-12
# gradient ascent hands over to Newton polishing below this gradient norm
ASCENT_LIMIT = 1e-6
TIE_LIMIT = 1e-9
MAX_HALVINGS = 60


def _cubic_values(T, U):
    return np.einsum('abc,ra,rb,rc->r', T, U, U, U)


def _contracted(T, U):
    # T(u, u, .) per row
    return np.einsum('abc,rb,rc->ra', T, U, U)


def _riemannian_gradient(T, U):
    g = 3 * _contracted(T, U)
    return g - np.sum(g * U, axis=1, keepdims=True) * U


def _newton_polish(T, u, steps=8):
    """Riemannian Newton steps on the sphere; kept only while f does not drop."""
    d = len(u)
    if d < 2:
        return u
    for _ in range(steps):
        grad = _riemannian_gradient(T, u[None])[0]
        if np.linalg.norm(grad) <= GRADIENT_LIMIT:
            break
        tangent = np.linalg.svd(np.eye(d) - np.outer(u, u))[0][:, :d - 1]
        hess = 6 * np.einsum('abc,c->ab', T, u) - 3 * _cubic_values(T, u[None])[0] * np.eye(d)
        reduced = tangent.T @ hess @ tangent
        step = np.linalg.lstsq(reduced, -tangent.T @ grad, rcond=None)[0]
        candidate = u + tangent @ step
        candidate /= np.linalg.norm(candidate)
        if _cubic_values(T, candidate[None])[0] < _cubic_values(T, u[None])[0] - 1e-14:
            break
        u = candidate
    return u


def _ascend(T, U, max_iter, tolerance=ASCENT_LIMIT):
    """Batched projected gradient ascent; a row whose step fails halves its step size."""
    norm = max(np.linalg.norm(T), NULL_FORM_LIMIT)
    steps = np.full(len(U), 0.1 / norm)
    values = _cubic_values(T, U)
    for _ in range(max_iter):
        grad = _riemannian_gradient(T, U)
        active = (np.linalg.norm(grad, axis=1) > tolerance) & (steps > 0.1 / norm * 2.0 ** -MAX_HALVINGS)
        if not active.any():
            break
        candidate = U + steps[:, None] * grad
        candidate /= np.linalg.norm(candidate, axis=1, keepdims=True)
        new_values = _cubic_values(T, candidate)
        accept = active & (new_values > values)
        U = np.where(accept[:, None], candidate, U)
        values = np.where(accept, new_values, values)
        steps = np.where(accept, np.minimum(steps * 2, 1.0 / norm), np.where(active, steps / 2, steps))
    return U, values


def stationarity_residual(shape: ShapeTensor, u: np.ndarray, subspace: Optional[np.ndarray] = None) -> float:
    """|| P A_{J u} u - f(u) u || with P the projection onto the subspace."""
    basis = np.eye(shape.n) if subspace is None else np.atleast_2d(subspace)
    T = shape.restricted(basis)
    coords = basis @ u
    value = float(np.einsum('abc,a,b,c->', T, coords, coords, coords))
    return float(np.linalg.norm(np.einsum('abc,b,c->a', T, coords, coords) - value * coords))


def maximize_cubic_form(shape: ShapeTensor, subspace: Optional[np.ndarray] = None, restarts: int = DEFAULT_RESTARTS,
                        seed: int = DEFAULT_SEED, max_iter: int = 2000) -> Tuple[np.ndarray, float]:
    """
    Maximize f(u) = C(u, u, u) over unit vectors in the row span of `subspace`.
    Returns (u, f(u)) with u in frame components. Raises NullFormSignal when C
    vanishes on the subspace.
    """
    basis = np.eye(shape.n) if subspace is None else np.atleast_2d(np.asarray(subspace, dtype=float))
    assert len(basis) >= 1, "Cannot maximize over an empty subspace"
    T = shape.restricted(basis)
    if np.max(np.abs(T)) < NULL_FORM_LIMIT:
        raise NullFormSignal(f"Cubic form vanishes on a {len(basis)} dimensional subspace")
    d = len(basis)
    starts = []
    for child in np.random.SeedSequence(seed).spawn(restarts):
        x = np.random.default_rng(child).standard_normal(d)
        starts.append(x / np.linalg.norm(x))
    U, values = _ascend(T, np.array(starts), max_iter)
    U = np.array([_newton_polish(T, u) for u in U])
    values = _cubic_values(T, U)

    best = np.max(values)
    candidates = [u @ basis for u, v in zip(U, values) if v >= best - TIE_LIMIT]
    u = max(candidates, key=lambda c: tuple(np.round(c, 8)))
    value = shape.cubic(u)
    residual = stationarity_residual(shape, u, basis)
    if residual > STATIONARITY_LIMIT:
        raise StructureViolationError(f"Cubic form maximizer is not stationary: residual {residual:.3e}")
    return u, value


def _orthonormal_complement(span: np.ndarray, within: np.ndarray) -> np.ndarray:
    """Orthonormal rows spanning the part of row-span(within) orthogonal to row-span(span)."""
    if len(within) == 0:
        return np.zeros((0, within.shape[1]))
    projection = within.T @ within
    if len(span):
        projection = projection - span.T @ span
    eigvals, eigvecs = np.linalg.eigh(projection)
    return eigvecs[:, eigvals > 0.5].T


def _shape_block(shape: ShapeTensor, u: np.ndarray, basis: np.ndarray) -> np.ndarray:
    return basis @ shape.shape_operator_along(u) @ basis.T


def extract_adapted_frame(shape: ShapeTensor, split: Tuple[int, int], restarts: int = DEFAULT_RESTARTS, seed: int = DEFAULT_SEED,
                          factor_bases: Optional[Tuple[np.ndarray, np.ndarray]] = None, strict: bool = True) -> AdaptedFrame:
    n1, n2 = split
    n = shape.n
    assert n1 + n2 == n, f"Split {split} does not match dimension {n}"
    if factor_bases is None:
        eye = np.eye(n)
        factor_bases = (eye[:n1], eye[n1:])
    first, second = factor_bases
    X = np.zeros((0, n))
    lambdas, mus, epsilons, f_values, null_stages, spreads = [], [], [], [], [], []
    for k in range(n1):
        remaining = _orthonormal_complement(X, first)
        try:
            u, value = maximize_cubic_form(shape, remaining, restarts=restarts, seed=seed + k)
        except NullFormSignal:
            logger.debug(f"Null cubic form at stage {k + 1}")
            u, value = remaining[0], 0.0
            null_stages.append(k + 1)
        X = np.vstack([X, u])
        lambdas.append(float(value))
        f_values.append(float(value))

        rest = _orthonormal_complement(X, np.eye(n))
        if len(rest) == 0:
            mus.append(None)
            epsilons.append(None)
            spreads.append(0.0)
            continue
        block = _shape_block(shape, u, rest)
        eigvals = np.linalg.eigvalsh(block)
        mu = float(np.mean(eigvals))
        spread = float(eigvals[-1] - eigvals[0])
        off_diagonal = float(np.max(np.abs(block - mu * np.eye(len(block)))))
        if strict and (spread > EIGEN_CLUSTER_LIMIT or off_diagonal > STRUCTURE_LIMIT):
            raise StructureViolationError(
                f"Stage {k + 1}: A_JX restricted to the complement is not a multiple of the identity "
                f"(eigenvalue spread {spread:.3e}, off-diagonal residual {off_diagonal:.3e})")
        mus.append(mu)
        epsilons.append(1 if 2 * mu - value > STRUCTURE_LIMIT else -1)
        spreads.append(spread)
    return AdaptedFrame(
        X=X,
        Y=np.array(second).reshape(n2, n),
        lambdas=lambdas,
        mus=mus,
        epsilons=epsilons,
        f_values=f_values,
        split=(n1, n2),
        null_stages=null_stages,
        eigen_spreads=spreads,
    )


def spectral_data_in_frame(frame: AdaptedFrame, shape: ShapeTensor) -> np.ndarray:
    """The cubic form in the adapted basis (X_1, ..., X_n1, Y_1, ..., Y_n2)."""
    return shape.restricted(frame.basis)


def lower_triangular_model(frame: AdaptedFrame) -> np.ndarray:
    """C in the adapted basis as the lower triangular form of A_J predicts it."""
    n1, _ = frame.split
    n = frame.n
    mus = frame.measured_mus()
    model = np.zeros((n, n, n))
    for a in range(n):
        for b in range(a, n):
            for c in range(b, n):
                if a == b == c:
                    value = frame.lambdas[a] if a < n1 else 0.0
                elif a < b == c and a < n1:
                    value = mus[a]
                else:
                    continue
                for i, j, k in {(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)}:
                    model[i, j, k] = value
    return model


def verify_frame_relations(frame: AdaptedFrame, shape: ShapeTensor, curv: Optional[CurvatureData], c_tilde: float) -> Dict[str, float]:
    n1, n2 = frame.split
    n = frame.n
    C = spectral_data_in_frame(frame, shape)
    mus = frame.measured_mus()
    staged = [(k, lam, mu) for k, (lam, mu) in enumerate(zip(frame.lambdas, frame.mus)) if mu is not None]
    relations = {}

    if n1 and n2:
        relations["mixed_block"] = float(np.max(np.abs(C[:n1, :n1, n1:])))
        isotropy = C[:n1, n1:, n1:] - mus[:, None, None] * np.eye(n2)[None]
        relations["isotropy"] = float(np.max(np.abs(isotropy)))
        relations["mu_square_sum"] = float(abs(np.sum(mus ** 2) - n1 * c_tilde / (n2 + 1)))
        expected = np.zeros((n2, n2, n))
        expected[:, :, :n1] = np.eye(n2)[:, :, None] * mus[None, None, :]
        relations["yy_block"] = float(np.max(np.abs(C[n1:, n1:, :] - expected)))
    else:
        relations.update({"mixed_block": 0.0, "isotropy": 0.0, "mu_square_sum": 0.0, "yy_block": 0.0})

    relations["lower_triangular"] = float(np.max(np.abs(C - lower_triangular_model(frame))))
    relations["trace"] = max([abs(lam + ((n - k - 1) * mu if mu is not None else 0.0))
                              for k, (lam, mu) in enumerate(zip(frame.lambdas, frame.mus))], default=0.0)
    relations["quadratic"] = max([abs(mu ** 2 - lam * mu - c_tilde - np.sum(mus[:k] ** 2)) for k, lam, mu in staged], default=0.0)
    relations["spectral_recursion"] = max([abs((n - k) * mu ** 2 - c_tilde - np.sum(mus[:k] ** 2)) for k, lam, mu in staged], default=0.0)

    closed = closed_form_spectrum(n, n1, c_tilde)
    deviations = [abs(lam - closed[k][0]) for k, lam in enumerate(frame.lambdas)]
    deviations += [abs(mu - closed[k][1]) for k, lam, mu in staged]
    relations["closed_form_lambda"] = max(deviations, default=0.0)

    first = frame.X
    ordering = []
    for k in range(n1):
        remaining = _orthonormal_complement(first[:k + 1], first)
        if len(remaining):
            largest = np.linalg.eigvalsh(_shape_block(shape, first[k], remaining))[-1]
            ordering.append(max(0.0, 2 * largest - frame.lambdas[k]))
    relations["stage_ordering"] = max(ordering, default=0.0)

    if curv is not None:
        mixed = [abs(curv.sectional_curvature(x, y)) for x in frame.X for y in frame.Y]
        relations["mixed_curvature"] = max(mixed, default=0.0)
        expected_c2 = (n + 1) / (n2 + 1) * c_tilde
        sphere = [abs(curv.sectional_curvature(frame.Y[i], frame.Y[j]) - expected_c2)
                  for i in range(n2) for j in range(i + 1, n2)]
        relations["sphere_curvature"] = max(sphere, default=0.0)
    return {name: float(value) for name, value in relations.items()}


def classify_case(profile: CurvatureProfile, relations: Dict[str, float], tolerances: Optional[Dict[str, float]] = None,
                  split: Optional[Tuple[int, int]] = None, c_tilde: float = 1.0) -> ClassificationVerdict:
    tolerances = TOLERANCE_TIERS if tolerances is None else tolerances
    tol = tolerances["curvature"]
    split = profile.split if split is None else split
    assert split is not None, "classify_case needs the factor split"
    n1, n2 = split
    n = n1 + n2
    if max(profile.c1_deviation, profile.c2_deviation) > 10 * tol:
        raise NotASpaceFormProductError(
            f"Sectional curvature is not constant within a factor (deviations {profile.c1_deviation:.3e}, {profile.c2_deviation:.3e})")
    c1, c2 = profile.c1_estimate, profile.c2_estimate
    expected_c2 = (n + 1) / (n2 + 1) * c_tilde
    expected_c1 = (n + 1) / (n1 + 1) * c_tilde
    residuals = dict(relations)
    residuals["c2_closed_form"] = abs(c2 - expected_c2)
    residuals["mixed_curvature_profile"] = profile.mixed_max

    if abs(c1) < tol and abs(c2) < tol:
        label = FLAT_BOTH
    elif abs(c1) < tol and c2 > tol and abs(c2 - expected_c2) < tol:
        label = CASE_I
    elif abs(c2) < tol and c1 > tol and abs(c1 - expected_c1) < tol:
        # same case with the roles of the factors exchanged
        residuals["c2_closed_form"] = abs(c1 - expected_c1)
        label = CASE_I
    else:
        label = INCONSISTENT
    return ClassificationVerdict(label, float(c1), float(c2), residuals)
