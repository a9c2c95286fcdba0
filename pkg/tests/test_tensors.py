import numpy as np
import pytest

from relaxdiff.errors import DegenerateDirectionError, DimensionError, SymmetryError
from relaxdiff.tensors import (
    apply,
    apply_field,
    frobenius,
    identity_tensor,
    is_psd,
    min_eig_field,
    project_orth,
    spectral_bounds,
)

from conftest import random_symmetric_tensor


def char_poly_eig_bounds(h):
    """Independent spectral oracle: roots of the characteristic polynomial."""
    coeffs = np.poly(h)
    roots = np.roots(coeffs)
    real = np.real(roots)
    return float(np.min(real)), float(np.max(real))


class TestFrobenius:
    def test_identity_pattern_k3_d2(self):
        a = np.zeros((3, 2))
        a[0, 0] = 1.0
        a[1, 1] = 1.0
        assert frobenius(a, a) == 2.0

    def test_zero_annihilates(self, rng):
        a = rng.standard_normal((3, 2))
        assert frobenius(a, np.zeros((3, 2))) == 0.0

    def test_hand_sum(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert frobenius(a, a) == 30.0  # 1 + 4 + 9 + 16

    def test_symmetric_in_arguments(self, rng):
        a = rng.standard_normal((3, 2))
        b = rng.standard_normal((3, 2))
        assert frobenius(a, b) == frobenius(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            frobenius(np.zeros((2, 2)), np.zeros((3, 2)))


class TestApply:
    def test_identity(self, rng):
        d = rng.standard_normal((3, 2))
        np.testing.assert_allclose(apply(identity_tensor(3, 2), d), d, rtol=0, atol=0)

    def test_scaling(self, rng):
        d = rng.standard_normal((2, 2))
        np.testing.assert_allclose(apply(2.0 * identity_tensor(2, 2), d), 2.0 * d)

    def test_projection_annihilates_direction(self):
        e = np.array([[1.0, 0.0], [0.0, 0.0]])
        p = project_orth(e)
        np.testing.assert_allclose(apply(p, e), np.zeros((2, 2)), atol=1e-15)

    def test_linear_in_d(self, rng):
        h = random_symmetric_tensor(rng, 6)
        d1 = rng.standard_normal((3, 2))
        d2 = rng.standard_normal((3, 2))
        lhs = apply(h, 2.0 * d1 - 3.0 * d2)
        rhs = 2.0 * apply(h, d1) - 3.0 * apply(h, d2)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            apply(np.eye(4), np.zeros((3, 2)))


class TestProjectOrth:
    def test_own_direction_removed(self):
        dhat = np.array([[1.0, 0.0], [0.0, 0.0]])
        np.testing.assert_allclose(apply(project_orth(dhat), dhat), 0.0, atol=1e-15)

    def test_orthogonal_input_unchanged(self):
        dhat = np.array([[1.0, 0.0], [0.0, 0.0]])
        d = np.array([[0.0, 1.0], [0.0, 0.0]])
        np.testing.assert_allclose(apply(project_orth(dhat), d), d, atol=1e-15)

    def test_eigenvalues_2x2(self, rng):
        # One zero eigenvalue along the direction, ones on its complement.
        dhat = rng.standard_normal((2, 2))
        w = np.linalg.eigvalsh(project_orth(dhat))
        np.testing.assert_allclose(np.sort(w), [0.0, 1.0, 1.0, 1.0], atol=1e-12)

    def test_idempotent(self, rng):
        for _ in range(20):
            dhat = rng.standard_normal((3, 2))
            p = project_orth(dhat)
            d = rng.standard_normal((3, 2))
            once = apply(p, d)
            np.testing.assert_allclose(apply(p, once), once, atol=1e-12)

    def test_matches_formula(self, rng):
        for _ in range(20):
            dhat = rng.standard_normal((3, 2))
            d = rng.standard_normal((3, 2))
            expected = d - frobenius(d, dhat) * dhat / frobenius(dhat, dhat)
            np.testing.assert_allclose(apply(project_orth(dhat), d), expected, atol=1e-12)

    def test_degenerate_direction(self):
        with pytest.raises(DegenerateDirectionError):
            project_orth(np.zeros((2, 2)))


class TestSpectralBounds:
    def test_identity(self):
        b = spectral_bounds(identity_tensor(3, 2))
        assert b.lambda_min == pytest.approx(1.0, abs=1e-12)
        assert b.lambda_max == pytest.approx(1.0, abs=1e-12)

    def test_scaled_identity(self):
        b = spectral_bounds(0.1 * identity_tensor(3, 2))
        assert b.lambda_min == pytest.approx(0.1, abs=1e-12)
        assert b.lambda_max == pytest.approx(0.1, abs=1e-12)

    def test_projection(self, rng):
        b = spectral_bounds(project_orth(rng.standard_normal((2, 2))))
        assert b.lambda_min == pytest.approx(0.0, abs=1e-10)
        assert b.lambda_max == pytest.approx(1.0, abs=1e-10)

    def test_against_characteristic_polynomial(self, rng):
        for n in (2, 4, 6):
            for _ in range(10):
                h = random_symmetric_tensor(rng, n, scale=2.0)
                b = spectral_bounds(h)
                lo, hi = char_poly_eig_bounds(h)
                assert b.lambda_min == pytest.approx(lo, abs=1e-8)
                assert b.lambda_max == pytest.approx(hi, abs=1e-8)

    def test_rejects_asymmetric(self):
        h = np.eye(4)
        h[0, 1] = 1e-3
        with pytest.raises(SymmetryError):
            spectral_bounds(h)


class TestIsPsd:
    def test_identity_thresholds(self):
        assert is_psd(identity_tensor(2, 2), 1.0)
        assert not is_psd(identity_tensor(2, 2), 1.5)

    def test_projection_at_zero(self, rng):
        assert is_psd(project_orth(rng.standard_normal((2, 2))), 0.0)


class TestSelfAdjointness:
    def test_frobenius_pairing(self, rng):
        for _ in range(20):
            h = random_symmetric_tensor(rng, 6)
            d = rng.standard_normal((3, 2))
            e = rng.standard_normal((3, 2))
            lhs = frobenius(apply(h, d), e)
            rhs = frobenius(d, apply(h, e))
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


class TestFieldHelpers:
    def test_apply_field_matches_per_cell(self, rng):
        hfield = rng.standard_normal((4, 5, 6, 6))
        hfield = 0.5 * (hfield + np.swapaxes(hfield, -1, -2))
        dfield = rng.standard_normal((4, 5, 3, 2))
        out = apply_field(hfield, dfield)
        for i in range(4):
            for j in range(5):
                np.testing.assert_allclose(out[i, j], apply(hfield[i, j], dfield[i, j]), atol=1e-13)

    def test_min_eig_field(self, rng):
        hfield = np.stack([np.eye(4), 0.3 * np.eye(4)])
        assert min_eig_field(hfield) == pytest.approx(0.3, abs=1e-12)
