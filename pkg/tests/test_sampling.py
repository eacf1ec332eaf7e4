"""Sequence generators: radical inverse, Halton, Sobol, concentric map."""

from fractions import Fraction

import numpy as np
import pytest

from markersim import sampling
from markersim.errors import ConfigurationError


def radical_inverse_oracle(index: int, base: int, perm=None) -> Fraction:
    """Exact digit-reversal via rational arithmetic."""
    num, den = 0, 1
    while index:
        index, digit = divmod(index, base)
        if perm is not None:
            digit = perm[digit]
        num = num * base + digit
        den *= base
    return Fraction(num, den)


class TestRadicalInverse:
    def test_zero_has_no_digits(self):
        assert sampling.radical_inverse(0, 2) == 0.0

    def test_one_base_two(self):
        assert sampling.radical_inverse(1, 2) == 0.5

    def test_three_base_three(self):
        # 3 = "10" base 3, reversed -> 0*(1/3) + 1*(1/9)
        assert sampling.radical_inverse(3, 3) == 1.0 / 9.0

    @pytest.mark.parametrize("base", [2, 3, 5, 7, 11, 13])
    def test_matches_exact_oracle(self, base):
        for index in list(range(50)) + [123, 1000, 65535]:
            expected = float(radical_inverse_oracle(index, base))
            assert sampling.radical_inverse(index, base) == expected

    def test_permuted_matches_oracle(self):
        perm = sampling.faure_permutation(5)
        for index in range(80):
            expected = float(radical_inverse_oracle(index, 5, perm))
            assert sampling.radical_inverse(index, 5, perm) == expected

    def test_values_in_unit_interval(self):
        for base in (2, 3, 5):
            vals = [sampling.radical_inverse(i, base) for i in range(200)]
            assert all(0.0 <= v < 1.0 for v in vals)

    def test_bad_permutation_rejected(self):
        with pytest.raises(ConfigurationError):
            sampling.radical_inverse(5, 3, (1, 0, 2))  # does not fix 0
        with pytest.raises(ConfigurationError):
            sampling.radical_inverse(5, 3, (0, 2, 2))


class TestFaurePermutations:
    def test_known_small_bases(self):
        assert sampling.faure_permutation(2) == (0, 1)
        assert sampling.faure_permutation(3) == (0, 1, 2)
        assert sampling.faure_permutation(4) == (0, 2, 1, 3)
        assert sampling.faure_permutation(5) == (0, 3, 2, 1, 4)
        assert sampling.faure_permutation(7) == (0, 2, 5, 3, 1, 4, 6)

    @pytest.mark.parametrize("base", [2, 3, 5, 7, 11, 13, 16])
    def test_is_permutation_fixing_zero(self, base):
        perm = sampling.faure_permutation(base)
        assert sorted(perm) == list(range(base))
        assert perm[0] == 0


class TestHalton:
    def test_index_zero_all_zero(self):
        config = sampling.HaltonConfig.plain(6)
        assert np.all(sampling.halton_point(0, config) == 0.0)

    def test_index_one_bases_2_3(self):
        config = sampling.HaltonConfig.plain(2)
        pt = sampling.halton_point(1, config)
        assert pt[0] == 0.5
        assert pt[1] == float(Fraction(1, 3))

    @pytest.mark.parametrize("mode", ["plain", "faure", "random"])
    @pytest.mark.parametrize("base_idx,m", [(0, 3), (1, 2), (2, 2)])
    def test_enumeration_property(self, mode, base_idx, m):
        # the first b^m points hit each interval [i/b^m, (i+1)/b^m) exactly once
        if mode == "plain":
            config = sampling.HaltonConfig.plain(3)
        elif mode == "faure":
            config = sampling.HaltonConfig.faure(3)
        else:
            config = sampling.HaltonConfig.random(3, seed=7)
        base = config.bases[base_idx]
        n = base**m
        vals = sampling.halton_points(n, config)[:, base_idx]
        cells = np.floor(vals * n).astype(int)
        assert sorted(cells) == list(range(n))

    def test_random_permutations_seeded(self):
        a = sampling.HaltonConfig.random(4, seed=3)
        b = sampling.HaltonConfig.random(4, seed=3)
        c = sampling.HaltonConfig.random(4, seed=4)
        assert a.permutations == b.permutations
        assert a.permutations != c.permutations

    def test_six_dof_better_spread_than_uniform(self):
        # max per-axis nearest-neighbour gap as a crude discrepancy proxy
        config = sampling.HaltonConfig.faure(6)
        pts = sampling.halton_points(1000, config)
        rng = np.random.default_rng(0)
        rand = rng.random((1000, 6))

        def max_gap(arr):
            worst = 0.0
            for d in range(arr.shape[1]):
                s = np.sort(np.concatenate([[0.0], arr[:, d], [1.0]]))
                worst = max(worst, float(np.diff(s).max()))
            return worst

        assert max_gap(pts) < max_gap(rand)

    def test_bases_must_be_prime(self):
        with pytest.raises(ConfigurationError):
            sampling.HaltonConfig(bases=(2, 4))


class TestSobol:
    def test_index_zero_is_origin(self):
        for dim in range(8):
            assert sampling.sobol_sample(0, dim) == 0.0

    def test_dim0_equals_radical_inverse_base2(self):
        for i in range(256):
            assert sampling.sobol_sample(i, 0) == sampling.radical_inverse(i, 2)

    @pytest.mark.parametrize("m", [1, 2, 4, 8])
    def test_power_of_two_prefix_dim0(self, m):
        n = 1 << m
        vals = sorted(sampling.sobol_sample(i, 0) for i in range(n))
        assert vals == [i / n for i in range(n)]

    def test_vectorized_matches_scalar(self):
        pts = sampling.sobol_points(300, 6)
        for i in (0, 1, 17, 255, 299):
            for d in range(6):
                assert pts[i, d] == sampling.sobol_sample(i, d)

    def test_determinism(self):
        a = sampling.sobol_points(64, 4)
        b = sampling.sobol_points(64, 4)
        assert np.array_equal(a, b)

    def test_all_dimensions_in_unit_interval(self):
        pts = sampling.sobol_points(512, 64)
        assert pts.min() >= 0.0 and pts.max() < 1.0

    def test_dimension_out_of_range(self):
        with pytest.raises(ConfigurationError):
            sampling.sobol_sample(1, 64)

    def test_first_256_2d_form_a_net(self):
        # every aligned 16x16 stratum holds exactly one of the 256 points
        pts = sampling.sobol_points(256, 2)
        cells = np.floor(pts * 16).astype(int)
        seen = {(int(a), int(b)) for a, b in cells}
        assert len(seen) == 256

    def test_invalid_direction_numbers_rejected(self):
        table = sampling.default_sobol_table()
        bad = table.direction_numbers.copy()
        bad[3, 5] = 0
        with pytest.raises(ConfigurationError):
            sampling.SobolTable(bad, table.dimensions)


class TestConcentricDiskMap:
    def test_center(self):
        assert sampling.concentric_disk_map(0.5, 0.5) == (0.0, 0.0)

    def test_on_axis(self):
        x, y = sampling.concentric_disk_map(1.0, 0.5)
        assert x == pytest.approx(1.0, abs=1e-15)
        assert y == pytest.approx(0.0, abs=1e-15)

    def test_norm_bounded(self):
        g = np.linspace(0.0, 1.0, 101)
        u, v = np.meshgrid(g, g)
        x, y = sampling.concentric_disk_map(u.ravel(), v.ravel())
        assert np.all(x * x + y * y <= 1.0 + 1e-12)

    def test_octant_continuity(self):
        # outputs stay close across the |a| == |b| seams
        rng = np.random.default_rng(5)
        base = rng.random(500)
        eps = 1e-9
        for u, v in [(base, base + eps), (base, 1.0 - base + eps)]:
            x1, y1 = sampling.concentric_disk_map(u, np.clip(v, 0, 1))
            x2, y2 = sampling.concentric_disk_map(u, np.clip(v - 2 * eps, 0, 1))
            assert np.max(np.hypot(x1 - x2, y1 - y2)) < 1e-6

    def test_area_preservation_quarter_disk(self):
        pts = sampling.sobol_points(100_000, 2)
        x, y = sampling.concentric_disk_map(pts[:, 0], pts[:, 1])
        frac = np.mean(x * x + y * y <= 0.25)
        assert abs(frac - 0.25) < 0.01
