import itertools
import math

import numpy as np
import pytest

from dtfourier.fourier import (
    BooleanFunction,
    FourierSpectrum,
    MultilinearPolynomial,
    fourier_weight,
    fwht,
    index_to_point,
    level_part,
    level_weight,
    level_weights,
    point_to_index,
    pointwise_product,
    wht_forward,
    wht_inverse,
)


def direct_spectrum(values: np.ndarray, n: int) -> np.ndarray:
    """O(4^n) reference: average of f(x) chi_S(x) with chi_S built from explicit points."""
    points = np.array([index_to_point(b, n) for b in range(1 << n)], dtype=np.float64)
    out = np.zeros(1 << n)
    for S in range(1 << n):
        chi = np.prod(np.where([(S >> i) & 1 for i in range(n)], points, 1.0), axis=1)
        out[S] = (values * chi).mean()
    return out


def majority3(x):
    return 1.0 if sum(x) > 0 else -1.0


class TestEncoding:
    def test_point_roundtrip(self):
        for n in (1, 3, 6):
            for b in range(1 << n):
                assert point_to_index(index_to_point(b, n)) == b

    def test_bit_one_means_minus_one(self):
        assert index_to_point(0b101, 3) == (-1, 1, -1)

    def test_rejects_non_sign_coordinates(self):
        with pytest.raises(ValueError):
            point_to_index((1, 0, -1))


class TestTransform:
    def test_matches_direct_sum(self):
        rng = np.random.default_rng(11)
        for n in range(1, 7):
            vals = rng.integers(-4, 5, size=1 << n).astype(float)
            got = wht_forward(BooleanFunction(n, vals)).coeffs
            np.testing.assert_array_equal(got, direct_spectrum(vals, n))

    def test_majority_spectrum(self):
        # MAJ3 = (x1 + x2 + x3)/2 - x1 x2 x3 / 2
        s = wht_forward(BooleanFunction.from_callable(3, majority3))
        assert s.support() == {0b001: 0.5, 0b010: 0.5, 0b100: 0.5, 0b111: -0.5}

    def test_constant_and_character(self):
        s = wht_forward(BooleanFunction.constant(4, 3.0))
        assert s.support() == {0: 3.0}
        for mask in (0, 1, 6, 15):
            assert wht_forward(BooleanFunction.character(4, mask)).support() == {mask: 1.0}

    def test_roundtrip_exact_on_dyadic_tables(self):
        rng = np.random.default_rng(3)
        for n in (1, 5, 10, 14):
            vals = rng.integers(-64, 65, size=1 << n) / 8.0
            f = BooleanFunction(n, vals)
            assert wht_inverse(wht_forward(f)) == f

    def test_parseval(self):
        rng = np.random.default_rng(4)
        vals = rng.standard_normal(1 << 12)
        s = wht_forward(BooleanFunction(12, vals))
        assert abs(np.sum(s.coeffs**2) - np.mean(vals**2)) <= 1e-12 * np.mean(vals**2)

    def test_fwht_along_axis(self):
        a = np.arange(24, dtype=float).reshape(8, 3)
        cols = np.stack([fwht(a[:, j]) for j in range(3)], axis=1)
        np.testing.assert_array_equal(fwht(a, axis=0), cols)

    def test_fwht_rejects_non_power_of_two(self):
        with pytest.raises(ValueError):
            fwht(np.ones(6))

    @pytest.mark.parametrize("n", [0, 25])
    def test_size_limits(self, n):
        with pytest.raises(ValueError):
            BooleanFunction(n, np.zeros(1 << max(n, 0)))

    def test_table_length_checked(self):
        with pytest.raises(ValueError):
            BooleanFunction(3, np.zeros(7))


class TestLevels:
    def test_level_part_of_majority(self):
        s = wht_forward(BooleanFunction.from_callable(3, majority3))
        assert level_part(s, 1).support() == {1: 0.5, 2: 0.5, 4: 0.5}
        assert level_part(s, 2).support() == {}
        assert level_weight(s, 3) == 0.5
        np.testing.assert_array_equal(level_weights(s), [0.0, 1.5, 0.0, 0.5])
        assert fourier_weight(s) == 2.0

    def test_level_parts_sum_to_spectrum(self):
        rng = np.random.default_rng(5)
        s = wht_forward(BooleanFunction(6, rng.integers(-1, 2, size=64).astype(float)))
        total = sum(level_part(s, k).coeffs for k in range(7))
        np.testing.assert_array_equal(total, s.coeffs)

    def test_level_out_of_range(self):
        s = FourierSpectrum(2, np.zeros(4))
        with pytest.raises(ValueError):
            level_part(s, 3)
        with pytest.raises(ValueError):
            level_weight(s, -1)

    def test_csv_lists_nonzero_coefficients(self):
        s = wht_forward(BooleanFunction.from_callable(3, majority3))
        lines = s.to_csv().splitlines()
        assert lines[0] == "mask,size,coefficient"
        assert lines[1:] == ["1,1,0.5", "2,1,0.5", "4,1,0.5", "7,3,-0.5"]


class TestPointwiseProduct:
    def test_product_of_characters_is_xor(self):
        f = pointwise_product(BooleanFunction.character(4, 0b0011), BooleanFunction.character(4, 0b0110))
        assert f == BooleanFunction.character(4, 0b0101)

    def test_mismatched_sizes(self):
        with pytest.raises(ValueError):
            pointwise_product(BooleanFunction.constant(2), BooleanFunction.constant(3))


class TestMultilinearPolynomial:
    def test_zero_coefficients_dropped(self):
        p = MultilinearPolynomial({0: 0.0, 3: 1.5})
        assert dict(p) == {3: 1.5}
        assert MultilinearPolynomial().degree == float("-inf")
        assert MultilinearPolynomial.constant(0.0).is_zero

    def test_arithmetic(self):
        p = MultilinearPolynomial({1: 1.0, 2: 2.0}, 4)
        q = MultilinearPolynomial({2: -2.0, 4: 1.0}, 4)
        assert dict(p + q) == {1: 1.0, 4: 1.0}
        assert (p - p).is_zero
        assert p.scale(2.0)[2] == 4.0
        assert (p + q).variables == 0b101
        assert p.norm() == 3.0

    def test_evaluation_agrees_with_table(self):
        p = MultilinearPolynomial({0: 0.25, 0b011: -1.0, 0b100: 2.0}, 3)
        table = p.evaluate_indices(np.arange(8))
        for b in range(8):
            assert p(b) == table[b] == p(index_to_point(b, 3))
        assert wht_forward(BooleanFunction(3, table)) == p.to_spectrum()

    def test_variables_outside_range_rejected(self):
        with pytest.raises(ValueError):
            MultilinearPolynomial({8: 1.0}, 3)

    def test_degree(self):
        assert MultilinearPolynomial({0b1011: 1.0, 1: 2.0}).degree == 3


def test_every_subset_mask_is_its_own_character():
    n = 3
    for S in range(1 << n):
        f = BooleanFunction.from_callable(n, lambda x: math.prod(x[i] for i in range(n) if S >> i & 1))
        assert f == BooleanFunction.character(n, S)
    assert len(list(itertools.product((1, -1), repeat=n))) == 1 << n
