import unittest

import numpy as np

from lagrangian_audit.catalog import make_flat_torus, make_product_immersion, make_totally_geodesic
from lagrangian_audit.classifier import (classify_case, extract_adapted_frame, lower_triangular_model, maximize_cubic_form,
                                         spectral_data_in_frame, stationarity_residual, verify_frame_relations)
from lagrangian_audit.geometry_engine import frame_and_metric, intrinsic_curvature, sectional_curvature_profile, shape_tensor
from lagrangian_audit.utils.classes.adapted_frame import ClassificationVerdict, CurvatureProfile, closed_form_spectrum
from lagrangian_audit.utils.classes.geometry_types import ShapeTensor
from lagrangian_audit.utils.constants import CASE_I, FLAT_BOTH, INCONSISTENT
from lagrangian_audit.utils.errors import NotASpaceFormProductError, NullFormSignal, StructureViolationError


def random_symmetric_tensor(n, seed):
    T = np.random.default_rng(seed).standard_normal((n, n, n))
    return sum(T.transpose(p) for p in [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]) / 6


def point_geometry(evaluator, seed=0, order=3):
    split = evaluator.factor_split
    sample = evaluator.sample(evaluator.sample_point(np.random.default_rng(seed)), order=order)
    frame = frame_and_metric(sample, split)
    shape = shape_tensor(sample, frame)
    curv = intrinsic_curvature(sample, frame)
    return sample, frame, shape, curv


class TestMaximizeCubicForm(unittest.TestCase):

    def test_single_axis(self):
        C = np.zeros((3, 3, 3))
        C[1, 1, 1] = 2.0
        u, value = maximize_cubic_form(ShapeTensor(C), restarts=8)
        np.testing.assert_allclose(u, [0.0, 1.0, 0.0], atol=1e-10)
        self.assertAlmostEqual(value, 2.0, places=12)

    def test_matches_brute_force_in_two_dimensions(self):
        for seed in range(3):
            shape = ShapeTensor(random_symmetric_tensor(2, seed))
            u, value = maximize_cubic_form(shape)
            angles = np.linspace(0, 2 * np.pi, 20000, endpoint=False)
            directions = np.stack([np.cos(angles), np.sin(angles)], axis=1)
            brute = np.max(np.einsum('abc,ia,ib,ic->i', shape.C, directions, directions, directions))
            self.assertLessEqual(brute, value + 1e-8)
            self.assertLess(value - brute, 1e-6)
            self.assertAlmostEqual(np.linalg.norm(u), 1.0, places=12)
            self.assertLess(stationarity_residual(shape, u), 1e-10)

    def test_brute_force_in_three_dimensions(self):
        shape = ShapeTensor(random_symmetric_tensor(3, 42))
        _, value = maximize_cubic_form(shape)
        directions = np.random.default_rng(0).standard_normal((20000, 3))
        directions /= np.linalg.norm(directions, axis=1)[:, None]
        brute = np.max(np.einsum('abc,ia,ib,ic->i', shape.C, directions, directions, directions))
        self.assertLessEqual(brute, value + 1e-8)
        self.assertLess(value - brute, 5e-2)

    def test_subspace(self):
        C = np.zeros((3, 3, 3))
        C[0, 0, 0] = 5.0
        C[2, 2, 2] = 1.0
        u, value = maximize_cubic_form(ShapeTensor(C), subspace=np.eye(3)[1:], restarts=4)
        np.testing.assert_allclose(u, [0.0, 0.0, 1.0], atol=1e-10)
        self.assertAlmostEqual(value, 1.0)

    def test_null_form(self):
        with self.assertRaises(NullFormSignal):
            maximize_cubic_form(ShapeTensor(np.zeros((2, 2, 2))))

    def test_deterministic_tie_break(self):
        # the flat torus cubic form has several maximizers of equal value
        _, _, shape, _ = point_geometry(make_flat_torus(3))
        first = maximize_cubic_form(shape, seed=7)
        second = maximize_cubic_form(shape, seed=7)
        np.testing.assert_array_equal(first[0], second[0])
        self.assertEqual(first[1], second[1])


class TestAdaptedFrame(unittest.TestCase):

    def test_closed_form_spectrum(self):
        (lam, mu), = closed_form_spectrum(3, 1, 1.0)
        self.assertAlmostEqual(lam, 2 / np.sqrt(3))
        self.assertAlmostEqual(mu, -1 / np.sqrt(3))
        spectrum = closed_form_spectrum(5, 3, 1.0)
        mus = np.array([m for _, m in spectrum])
        for k, (lam, mu) in enumerate(spectrum):
            self.assertAlmostEqual(lam + (5 - k - 1) * mu, 0.0)
            self.assertAlmostEqual((5 - k) * mu ** 2, 1.0 + np.sum(mus[:k] ** 2))

    def test_product_spectral_reconstruction(self):
        for n1, n2 in [(1, 1), (1, 2), (2, 2), (1, 3), (3, 2), (2, 3)]:
            n = n1 + n2
            _, frame, shape, curv = point_geometry(make_product_immersion(n1, n2), seed=n1 * 10 + n2)
            adapted = extract_adapted_frame(shape, (n1, n2), factor_bases=frame.factor_bases((n1, n2)))
            self.assertAlmostEqual(adapted.lambdas[0], (n - 1) / np.sqrt(n), delta=1e-6)
            closed = closed_form_spectrum(n, n1, 1.0)
            np.testing.assert_allclose(adapted.lambdas, [lam for lam, _ in closed], atol=1e-6)
            np.testing.assert_allclose(adapted.measured_mus(), [mu for _, mu in closed], atol=1e-6)
            self.assertAlmostEqual(np.sum(adapted.measured_mus() ** 2), n1 / (n2 + 1), delta=1e-6)
            self.assertEqual(adapted.epsilons, [-1] * n1)
            self.assertLess(adapted.orthonormality_residual(), 1e-10)

            relations = verify_frame_relations(adapted, shape, curv, 1.0)
            for name, value in relations.items():
                self.assertLess(value, 1e-7, f"{name} for ({n1}, {n2})")

    def test_lower_triangular_form(self):
        _, frame, shape, _ = point_geometry(make_product_immersion(2, 1))
        adapted = extract_adapted_frame(shape, (2, 1), factor_bases=frame.factor_bases((2, 1)))
        np.testing.assert_allclose(spectral_data_in_frame(adapted, shape), lower_triangular_model(adapted), atol=1e-7)

    def test_spectral_table(self):
        _, frame, shape, _ = point_geometry(make_product_immersion(2, 2))
        adapted = extract_adapted_frame(shape, (2, 2), factor_bases=frame.factor_bases((2, 2)))
        rows = adapted.spectral_table(1.0)
        self.assertEqual([row["stage"] for row in rows], [1, 2])
        for row in rows:
            self.assertAlmostEqual(row["lambda"], row["lambda_closed_form"], delta=1e-6)
            self.assertAlmostEqual(row["mu"], row["mu_closed_form"], delta=1e-6)

    def test_flat_torus_last_stage_has_no_complement(self):
        _, frame, shape, curv = point_geometry(make_flat_torus(3))
        adapted = extract_adapted_frame(shape, (3, 0))
        self.assertIsNone(adapted.mus[-1])
        np.testing.assert_allclose(adapted.lambdas, [lam for lam, _ in closed_form_spectrum(3, 3, 1.0)], atol=1e-6)
        for name, value in verify_frame_relations(adapted, shape, curv, 1.0).items():
            self.assertLess(value, 1e-7, name)

    def test_totally_geodesic_is_all_null(self):
        _, frame, shape, _ = point_geometry(make_totally_geodesic(2))
        adapted = extract_adapted_frame(shape, (2, 0))
        self.assertEqual(adapted.null_stages, [1, 2])
        self.assertEqual(adapted.lambdas, [0.0, 0.0])

    def test_conjugate_lift_gives_the_same_spectrum(self):
        point = np.array([0.4, 1.1, 0.2, -0.3])
        frames = []
        for conjugate in (False, True):
            evaluator = make_product_immersion(2, 2, conjugate=conjugate)
            sample = evaluator.sample(point, order=2)
            frame = frame_and_metric(sample, (2, 2))
            frames.append(extract_adapted_frame(shape_tensor(sample, frame), (2, 2), factor_bases=frame.factor_bases((2, 2))))
        np.testing.assert_allclose(frames[0].lambdas, frames[1].lambdas, atol=1e-10)
        np.testing.assert_allclose(frames[0].measured_mus(), frames[1].measured_mus(), atol=1e-10)
        # maximizing unit vectors may differ between the lifts; the spectrum may not
        for plain, conjugated in zip(frames[0].spectral_table(1.0), frames[1].spectral_table(1.0)):
            for key in ("lambda", "mu", "epsilon", "f_max"):
                if plain[key] is None:
                    self.assertIsNone(conjugated[key], key)
                else:
                    self.assertAlmostEqual(plain[key], conjugated[key], delta=1e-10, msg=key)

    def test_structure_violation(self):
        with self.assertRaises(StructureViolationError):
            extract_adapted_frame(ShapeTensor(random_symmetric_tensor(3, 1)), (2, 1))
        relaxed = extract_adapted_frame(ShapeTensor(random_symmetric_tensor(3, 1)), (2, 1), strict=False)
        self.assertGreater(max(relaxed.eigen_spreads), 1e-6)


class TestClassifyCase(unittest.TestCase):

    def profile_for(self, evaluator, seed=0):
        _, frame, shape, curv = point_geometry(evaluator, seed)
        split = evaluator.factor_split
        profile = sectional_curvature_profile(curv, frame, split, planes=16, rng=np.random.default_rng(seed))
        adapted = extract_adapted_frame(shape, split, factor_bases=frame.factor_bases(split))
        return profile, verify_frame_relations(adapted, shape, curv, 1.0)

    def test_product_is_case_i(self):
        profile, relations = self.profile_for(make_product_immersion(2, 2))
        verdict = classify_case(profile, relations)
        self.assertEqual(verdict.case_label, CASE_I)
        self.assertAlmostEqual(verdict.c2, 5 / 3, delta=1e-8)
        self.assertLess(verdict.constraint_residuals["c2_closed_form"], 1e-8)
        self.assertTrue(verdict.consistent)

    def test_flat_torus_is_flat_both(self):
        profile, relations = self.profile_for(make_flat_torus(3))
        verdict = classify_case(profile, relations)
        self.assertEqual(verdict.case_label, FLAT_BOTH)

    def test_both_curved_is_inconsistent(self):
        profile = CurvatureProfile(c1_estimate=0.5, c2_estimate=1.5, mixed_estimate=0.0, max_deviation=0.0, split=(2, 2))
        verdict = classify_case(profile, {})
        self.assertEqual(verdict.case_label, INCONSISTENT)
        self.assertFalse(verdict.consistent)

    def test_swapped_factors(self):
        profile = CurvatureProfile(c1_estimate=5 / 3, c2_estimate=0.0, mixed_estimate=0.0, max_deviation=0.0, split=(2, 2))
        self.assertEqual(classify_case(profile, {}).case_label, CASE_I)

    def test_not_a_space_form_product(self):
        profile = CurvatureProfile(c1_estimate=0.0, c2_estimate=1.0, mixed_estimate=0.0, max_deviation=0.3, c2_deviation=0.3, split=(1, 2))
        with self.assertRaises(NotASpaceFormProductError):
            classify_case(profile, {})

    def test_verdict_labels(self):
        with self.assertRaises(AssertionError):
            ClassificationVerdict("case_ii", 0.0, 0.0)


if __name__ == '__main__':
    unittest.main()
