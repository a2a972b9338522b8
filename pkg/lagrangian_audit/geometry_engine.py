'''
Pointwise Lagrangian geometry of a horizontal lift.

Given a LiftSample (the lift psi as a Taylor jet around a parameter point) this
module computes
1. the induced metric and a deterministic orthonormal frame,
2. the ambient residuals (unit norm, horizontality, vanishing symplectic form),
3. the cubic form C_abc = <h(e_a, e_b), J e_c>,
4. Christoffel symbols and the Riemann tensor from the metric jets, and the
   normal curvature from the normal frame fields N_k = i d_k psi,
5. the covariant derivatives of h up to second order,
6. the residuals of the Gauss, Codazzi and Ricci equations, the cyclic
   identity for R and h, and the Ricci commutation identity for second
   derivatives of h,
7. a sectional curvature profile over a declared factor split.

On a horizontal Lagrangian lift J maps tangent to normal vectors and
J nabla = nabla^perp J, so Re<d_l d_k psi, d_m psi> is both the normal
connection of N_k and the lowered Christoffel symbol. R^perp therefore agrees
with R and the Ricci equation holds exactly when the Gauss equation does. It
is still evaluated, from the second order jets instead of the metric
derivatives, as a consistency check of the two code paths.

All CP^n(4) computations happen on unit sphere lifts; the Hopf projection is
never formed. Functions are pure and safe to call from pool workers.
'''
import itertools
import logging
from dataclasses import replace
from typing import Dict, Optional, Tuple

import numpy as np

from lagrangian_audit.utils.classes.adapted_frame import CurvatureProfile
from lagrangian_audit.utils.classes.geometry_types import CurvatureData, FrameData, LiftSample, PointGeometry, ShapeTensor
from lagrangian_audit.utils.constants import (DEFAULT_PLANES, FLAT_CN, METRIC_CONDITION_LIMIT, SPHERE_LIFT_CP, SYMMETRY_LIMIT,
                                              check_jet_order)
from lagrangian_audit.utils.errors import AuditError, DegenerateParametrizationError, InconsistencyError

logger = logging.getLogger(__name__)

PERMUTATIONS = list(itertools.permutations(range(3)))


def real_inner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Re <a_i, b_j> for stacks of complex vectors along the last axis."""
    return np.real(np.einsum('...d,...d->...', a, np.conj(b)))


def _realify(vectors: np.ndarray) -> np.ndarray:
    return np.concatenate([vectors.real, vectors.imag], axis=-1)


def _check_metric(metric: np.ndarray) -> None:
    condition = np.linalg.cond(metric)
    if not np.isfinite(condition) or condition > METRIC_CONDITION_LIMIT:
        raise DegenerateParametrizationError(f"Metric condition number {condition:.3e} exceeds {METRIC_CONDITION_LIMIT:.0e}")


def _pivoted_gram_schmidt(vectors: np.ndarray, blocks) -> Tuple[np.ndarray, np.ndarray]:
    # modified Gram-Schmidt, largest remaining norm first within each block
    n = len(vectors)
    work = np.array(vectors, dtype=float)
    coeffs = np.eye(n)
    frame = np.zeros_like(work)
    change = np.zeros((n, n))
    unused = list(range(n))
    a = 0
    for block in blocks:
        remaining = list(block)
        while remaining:
            norms = [np.linalg.norm(work[i]) for i in remaining]
            pick = remaining[int(np.argmax(norms))]
            norm = np.linalg.norm(work[pick])
            e = work[pick] / norm
            c = coeffs[pick] / norm
            frame[a] = e
            change[:, a] = c
            remaining.remove(pick)
            unused.remove(pick)
            for i in unused:
                projection = work[i] @ e
                work[i] = work[i] - projection * e
                coeffs[i] = coeffs[i] - projection * c
            a += 1
    return frame, change


@check_jet_order(1)
def frame_and_metric(sample: LiftSample, split: Optional[Tuple[int, int]] = None) -> FrameData:
    """
    Metric g_ij = Re<d_i psi, d_j psi> and an orthonormal frame. With a split the
    first n1 frame vectors span the first factor's coordinate directions.
    """
    tangents = sample.derivatives.tangents
    real_tangents = _realify(tangents)
    metric = real_tangents @ real_tangents.T
    _check_metric(metric)
    if split is None:
        blocks = [range(sample.n)]
    else:
        n1, n2 = split
        assert n1 + n2 == sample.n, f"Split {split} does not match dimension {sample.n}"
        blocks = [range(n1), range(n1, sample.n)]
    frame, change = _pivoted_gram_schmidt(real_tangents, blocks)
    dim = sample.ambient_dim
    orthonormal = frame[:, :dim] + 1j * frame[:, dim:]
    return FrameData(tangents, orthonormal, metric, change, None if split is None else tuple(split))


def ambient_structure_residuals(sample: LiftSample, frame: FrameData) -> Dict[str, float]:
    value = sample.derivatives.value
    E = frame.orthonormal_frame
    lagrangian = float(np.max(np.abs(real_inner(1j * E[:, None], E[None, :]))))
    if sample.ambient_kind == FLAT_CN:
        return {"unit_norm": 0.0, "horizontality": 0.0, "lagrangian_form": lagrangian}
    return {
        "unit_norm": float(abs(np.linalg.norm(value) - 1.0)),
        "horizontality": float(np.max(np.abs(real_inner(E, 1j * value)))),
        "lagrangian_form": lagrangian,
    }


def symmetry_residual(C: np.ndarray) -> float:
    return float(max(np.max(np.abs(C - C.transpose(p))) for p in PERMUTATIONS))


@check_jet_order(2)
def shape_tensor(sample: LiftSample, frame: FrameData, strict: bool = True) -> ShapeTensor:
    derivs = sample.derivatives
    normals = 1j * frame.orthonormal_frame
    if sample.ambient_kind == SPHERE_LIFT_CP:
        position = derivs.value / np.linalg.norm(derivs.value)
        for fiber in (position, 1j * position):
            normals = normals - real_inner(normals, fiber)[:, None] * fiber[None, :]
    F = frame.frame_change
    second = np.einsum('ia,jb,ijd->abd', F, F, derivs.second)
    C = np.real(np.einsum('abd,cd->abc', second, np.conj(normals)))
    asymmetry = symmetry_residual(C)
    if strict and asymmetry > SYMMETRY_LIMIT:
        raise InconsistencyError(f"Cubic form asymmetry {asymmetry:.3e} exceeds {SYMMETRY_LIMIT:.0e}; the lift is not horizontal Lagrangian")
    symmetric = sum(C.transpose(p) for p in PERMUTATIONS) / len(PERMUTATIONS)
    return ShapeTensor(symmetric, asymmetry)


def minimality_residual(shape: ShapeTensor) -> float:
    return float(np.max(np.abs(shape.trace_vector())))


def _raise_connection(g_inv, dg_inv, lowered, lowered_derivative):
    # lowered[l, i, j] = Gamma_{l, ij}, lowered_derivative[m, l, i, j] = d_m Gamma_{l, ij}
    gamma = np.einsum('kl,lij->kij', g_inv, lowered)
    d_gamma = np.einsum('mkl,lij->mkij', dg_inv, lowered) + np.einsum('kl,mlij->mkij', g_inv, lowered_derivative)
    return gamma, d_gamma


def _curvature_from_connection(gamma, d_gamma):
    """R^l_ijk = d_i Gamma^l_jk - d_j Gamma^l_ik + Gamma^l_ip Gamma^p_jk - Gamma^l_jp Gamma^p_ik, as [l, i, j, k]."""
    return (np.einsum('iljk->lijk', d_gamma) - np.einsum('jlik->lijk', d_gamma)
            + np.einsum('lip,pjk->lijk', gamma, gamma) - np.einsum('ljp,pik->lijk', gamma, gamma))


@check_jet_order(3)
def intrinsic_curvature(sample: LiftSample, frame: Optional[FrameData] = None) -> CurvatureData:
    if frame is None:
        frame = frame_and_metric(sample)
    derivs = sample.derivatives
    space = derivs.first_space
    G = derivs.metric_coeffs
    g = G[..., 0]
    _check_metric(g)
    dg = space.gradient(G)    # [i, j, l] = d_l g_ij
    ddg = space.hessian(G)    # [i, j, l, m] = d_l d_m g_ij
    g_inv = np.linalg.inv(g)
    dg_inv = -np.einsum('kp,pqm,ql->mkl', g_inv, dg, g_inv)

    lowered = 0.5 * (np.einsum('jli->lij', dg) + np.einsum('ilj->lij', dg) - np.einsum('ijl->lij', dg))
    lowered_derivative = 0.5 * (np.einsum('jlim->mlij', ddg) + np.einsum('iljm->mlij', ddg) - np.einsum('ijlm->mlij', ddg))
    gamma, d_gamma = _raise_connection(g_inv, dg_inv, lowered, lowered_derivative)
    riemann_up = _curvature_from_connection(gamma, d_gamma)
    riemann_coordinate = np.einsum('lm,mijk->ijkl', g, riemann_up)

    # normal connection of N_k = i d_k psi, built from the second order jets;
    # equal to the tangent connection on a horizontal Lagrangian lift
    normal_space = derivs.second_space
    N = derivs.normal_connection_coeffs
    normal_lowered = N[..., 0]
    normal_lowered_derivative = np.einsum('mlks->smlk', normal_space.gradient(N))
    normal_gamma, normal_d_gamma = _raise_connection(g_inv, dg_inv, normal_lowered, normal_lowered_derivative)
    normal_up = _curvature_from_connection(normal_gamma, normal_d_gamma)
    normal_coordinate = np.einsum('lm,mijk->ijkl', g, normal_up)

    return CurvatureData(
        metric_jets=G,
        metric_space=space,
        christoffels=gamma,
        christoffel_derivatives=d_gamma,
        riemann_coordinate=riemann_coordinate,
        riemann=frame.to_frame(riemann_coordinate),
        normal_riemann=frame.to_frame(normal_coordinate),
    )


def _cubic_form_field(sample: LiftSample):
    derivs = sample.derivatives
    space = derivs.second_space
    S = derivs.cubic_coeffs
    return space, S


def _coordinate_nabla_sigma(sigma, d_sigma, gamma):
    # d_sigma[i, j, k, l] = d_l sigma_ijk; result [l, i, j, k]
    return (np.einsum('ijkl->lijk', d_sigma)
            - np.einsum('pli,pjk->lijk', gamma, sigma)
            - np.einsum('plj,ipk->lijk', gamma, sigma)
            - np.einsum('plk,ijp->lijk', gamma, sigma))


@check_jet_order(3)
def nabla_h(sample: LiftSample, frame: FrameData, shape: ShapeTensor, curv: CurvatureData) -> np.ndarray:
    """(nabla h)_dabc = <(nabla_{e_d} h)(e_a, e_b), J e_c>."""
    assert shape.n == sample.n, f"Shape tensor of dimension {shape.n} for a sample of dimension {sample.n}"
    space, S = _cubic_form_field(sample)
    nabla = _coordinate_nabla_sigma(S[..., 0], space.gradient(S), curv.christoffels)
    return frame.to_frame(nabla)


@check_jet_order(4)
def nabla2_h(sample: LiftSample, frame: FrameData, shape: ShapeTensor, curv: CurvatureData) -> np.ndarray:
    """(nabla^2 h)_eabcd with e the outer and a the inner differentiation direction."""
    assert shape.n == sample.n, f"Shape tensor of dimension {shape.n} for a sample of dimension {sample.n}"
    space, S = _cubic_form_field(sample)
    sigma = S[..., 0]
    d_sigma = space.gradient(S)       # [i, j, k, m]
    dd_sigma = space.hessian(S)       # [i, j, k, l, m]
    gamma = curv.christoffels
    d_gamma = curv.christoffel_derivatives
    nabla = _coordinate_nabla_sigma(sigma, d_sigma, gamma)
    outer = (np.einsum('ijklm->mlijk', dd_sigma)
             - np.einsum('mpli,pjk->mlijk', d_gamma, sigma) - np.einsum('pli,pjkm->mlijk', gamma, d_sigma)
             - np.einsum('mplj,ipk->mlijk', d_gamma, sigma) - np.einsum('plj,ipkm->mlijk', gamma, d_sigma)
             - np.einsum('mplk,ijp->mlijk', d_gamma, sigma) - np.einsum('plk,ijpm->mlijk', gamma, d_sigma))
    nabla2 = (outer
              - np.einsum('pml,pijk->mlijk', gamma, nabla)
              - np.einsum('pmi,lpjk->mlijk', gamma, nabla)
              - np.einsum('pmj,lipk->mlijk', gamma, nabla)
              - np.einsum('pmk,lijp->mlijk', gamma, nabla))
    return frame.to_frame(nabla2)


def gauss_model(shape: ShapeTensor, c_tilde: float) -> np.ndarray:
    """c(<Y,Z><X,W> - <X,Z><Y,W>) + <[A_JX, A_JY] Z, W> on frame indices [x, y, z, w]."""
    C = shape.C
    eye = np.eye(shape.n)
    constant = c_tilde * (np.einsum('bc,ad->abcd', eye, eye) - np.einsum('ac,bd->abcd', eye, eye))
    commutator = np.einsum('bcp,apd->abcd', C, C) - np.einsum('acp,bpd->abcd', C, C)
    return constant + commutator


def _cyclic_tensor(shape: ShapeTensor, riemann: np.ndarray) -> np.ndarray:
    # R(W,X) J h(Y,Z) - J h(Y, R(W,X) Z), components along e_v, summed cyclically over (W, X, Y)
    C = shape.C
    term = -np.einsum('yzp,wxpv->wxyzv', C, riemann) + np.einsum('wxzp,ypv->wxyzv', riemann, C)
    return term + np.einsum('xywzv->wxyzv', term) + np.einsum('ywxzv->wxyzv', term)


def _random_quadruple(n: int, rng: np.random.Generator) -> np.ndarray:
    gaussian = rng.standard_normal((n, 4))
    if n >= 4:
        return np.linalg.qr(gaussian)[0].T
    return (gaussian / np.linalg.norm(gaussian, axis=0)).T


def structural_residuals(frame: FrameData, shape: ShapeTensor, curv: CurvatureData, c_tilde: float,
                         rng: Optional[np.random.Generator] = None, quadruples: int = 16) -> Dict[str, Optional[float]]:
    assert frame.n == shape.n == curv.n, f"Dimensions disagree: frame {frame.n}, shape {shape.n}, curvature {curv.n}"
    rng = np.random.default_rng(0) if rng is None else rng
    model = gauss_model(shape, c_tilde)
    residuals = {
        "gauss": float(np.max(np.abs(curv.riemann - model))),
        "ricci_eq": float(np.max(np.abs(curv.normal_riemann - model))),
        "codazzi": None,
        "ricci_identity": None,
    }
    cyclic = _cyclic_tensor(shape, curv.riemann)
    tsinghua = float(np.max(np.abs(cyclic)))
    for _ in range(quadruples):
        w, x, y, z = _random_quadruple(shape.n, rng)
        tsinghua = max(tsinghua, float(np.linalg.norm(np.einsum('wxyzv,w,x,y,z->v', cyclic, w, x, y, z))))
    residuals["tsinghua"] = tsinghua
    if curv.nabla_h is not None:
        residuals["codazzi"] = float(np.max(np.abs(curv.nabla_h - curv.nabla_h.transpose(1, 0, 2, 3))))
    if curv.nabla2_h is not None:
        C = shape.C
        R = curv.riemann
        commuted = curv.nabla2_h - curv.nabla2_h.transpose(1, 0, 2, 3, 4)
        expected = -(np.einsum('xyzp,pwv->xyzwv', R, C)
                     + np.einsum('xywp,zpv->xyzwv', R, C)
                     + np.einsum('xyvp,zwp->xyzwv', R, C))
        residuals["ricci_identity"] = float(np.max(np.abs(commuted - expected)))
    return residuals


def _planes_within(curv: CurvatureData, basis: np.ndarray, planes: int, rng: np.random.Generator):
    if len(basis) < 2:
        return []
    values = []
    for _ in range(planes):
        q = np.linalg.qr(rng.standard_normal((len(basis), 2)))[0]
        values.append(curv.sectional_curvature(q[:, 0] @ basis, q[:, 1] @ basis))
    return values


def _planes_between(curv: CurvatureData, first: np.ndarray, second: np.ndarray, planes: int, rng: np.random.Generator):
    if len(first) == 0 or len(second) == 0:
        return []
    values = []
    for _ in range(planes):
        u = rng.standard_normal(len(first))
        v = rng.standard_normal(len(second))
        values.append(curv.sectional_curvature((u / np.linalg.norm(u)) @ first, (v / np.linalg.norm(v)) @ second))
    return values


def _mean_and_deviation(values):
    if not values:
        return 0.0, 0.0
    values = np.array(values)
    mean = float(np.mean(values))
    return mean, float(np.max(np.abs(values - mean)))


def sectional_curvature_profile(curv: CurvatureData, frame: FrameData, split: Tuple[int, int],
                                planes: int = DEFAULT_PLANES, rng: Optional[np.random.Generator] = None) -> CurvatureProfile:
    rng = np.random.default_rng(0) if rng is None else rng
    first, second = frame.factor_bases(split)
    c1, c1_deviation = _mean_and_deviation(_planes_within(curv, first, planes, rng))
    c2, c2_deviation = _mean_and_deviation(_planes_within(curv, second, planes, rng))
    mixed_values = _planes_between(curv, first, second, planes, rng)
    mixed, mixed_deviation = _mean_and_deviation(mixed_values)
    return CurvatureProfile(
        c1_estimate=c1,
        c2_estimate=c2,
        mixed_estimate=mixed,
        max_deviation=max(c1_deviation, c2_deviation, mixed_deviation),
        c1_deviation=c1_deviation,
        c2_deviation=c2_deviation,
        mixed_max=float(np.max(np.abs(mixed_values))) if mixed_values else 0.0,
        split=tuple(split),
    )


def calabi_point_residual(shape: ShapeTensor, direction: np.ndarray) -> Dict[str, float]:
    """
    A Calabi product with a point has h(E1, E1) = lambda1 J E1 and h(E1, Ei) = lambda2 J Ei
    for the curve direction E1; measure how far A_{J E1} is from that form.
    """
    u = direction / np.linalg.norm(direction)
    A = shape.shape_operator_along(u)
    complement = np.linalg.svd(np.eye(shape.n) - np.outer(u, u))[0][:, :shape.n - 1].T
    block = complement @ A @ complement.T
    lambda1 = float(u @ A @ u)
    lambda2 = float(np.trace(block) / max(len(block), 1))
    residual = max(float(np.max(np.abs(block - lambda2 * np.eye(len(block))))) if len(block) else 0.0,
                   float(np.max(np.abs(complement @ A @ u))) if len(block) else 0.0)
    return {"residual": residual, "lambda1": lambda1, "lambda2": lambda2}


def analyze_sample(sample: LiftSample, split: Optional[Tuple[int, int]] = None, rng: Optional[np.random.Generator] = None,
                   planes: int = DEFAULT_PLANES) -> PointGeometry:
    """
    Run the whole pointwise pipeline. A failing step leaves the earlier results
    in place and records its error instead of raising.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    geometry = PointGeometry()
    try:
        geometry.frame = frame_and_metric(sample, split)
        geometry.ambient = ambient_structure_residuals(sample, geometry.frame)
        geometry.shape = shape_tensor(sample, geometry.frame, strict=False)
        if geometry.shape.asymmetry > SYMMETRY_LIMIT:
            raise InconsistencyError(f"Cubic form asymmetry {geometry.shape.asymmetry:.3e} exceeds {SYMMETRY_LIMIT:.0e}")
        geometry.minimality = minimality_residual(geometry.shape)
        curv = intrinsic_curvature(sample, geometry.frame)
        first = nabla_h(sample, geometry.frame, geometry.shape, curv)
        second = nabla2_h(sample, geometry.frame, geometry.shape, curv) if sample.order >= 4 else None
        geometry.curv = replace(curv, nabla_h=first, nabla2_h=second)
        geometry.nabla_h_max = float(np.max(np.abs(first)))
        geometry.structural = structural_residuals(geometry.frame, geometry.shape, geometry.curv, sample.c_tilde, rng)
        if split is not None:
            geometry.profile = sectional_curvature_profile(geometry.curv, geometry.frame, split, planes, rng)
    except AuditError as e:
        geometry.error = f"{type(e).__name__}: {e}"
        logger.debug(f"Point {sample.param_point} stopped early: {geometry.error}")
    return geometry
