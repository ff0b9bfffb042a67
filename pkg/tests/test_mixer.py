"""Non-linear mixing against an independent per-pixel oracle."""

import math

import numpy as np
import pytest
from scipy import stats

from augsearch.core import LabeledExample, one_hot, seeded_rng
from augsearch.mixer import (
    LAMBDA3_EPS,
    MixLambdas,
    linear_mixup,
    mix_images,
    mix_labels,
    mixing_coefficient,
    nonlinear_mix,
    pair_dataset,
    sample_lambdas,
)


def mix_oracle(x1, x2, lam):
    """Reference mix: direct-form coefficient, explicit per-pixel loop.

    Deliberately written differently from the library (paper-form c with a
    division, scalar loops instead of slices) so agreement is evidence.
    """
    h, w = x1.shape
    mu1, mu2 = x1.mean(), x2.mean()
    s1, s2 = x1.std(), x2.std()
    if s1 == 0.0 and s2 == 0.0:
        c = lam.lambda3
    elif s2 == 0.0:
        c = 0.0
    elif s1 == 0.0:
        c = 1.0
    else:
        c = 1.0 / (1.0 + (s1 / s2) * (1.0 - lam.lambda3) / lam.lambda3)
    phi = math.sqrt(c ** 2 + (1.0 - c) ** 2)
    r = math.floor(lam.lambda1 * h)
    s = math.floor(lam.lambda2 * w)
    out = np.empty((h, w))
    for i in range(h):
        for j in range(w):
            a = x1[i, j] - mu1
            b = x2[i, j] - mu2
            if i < r and j < s:
                out[i, j] = a
            elif i < r:
                out[i, j] = (c / phi) * a + ((1.0 - c) / phi) * b
            elif j < s:
                out[i, j] = ((1.0 - c) / phi) * a + (c / phi) * b
            else:
                out[i, j] = b
    return out


class TestMixingCoefficient:
    def test_symmetric_half(self):
        c, phi = mixing_coefficient(10.0, 10.0, 0.5)
        assert c == pytest.approx(0.5, abs=1e-15)
        assert phi == pytest.approx(0.7071067811865476, abs=1e-15)

    def test_symmetric_point_eight(self):
        c, phi = mixing_coefficient(3.0, 3.0, 0.8)
        assert c == pytest.approx(0.8, abs=1e-12)
        assert phi == pytest.approx(math.sqrt(0.64 + 0.04), abs=1e-12)

    def test_limit_lambda3_to_one(self):
        c, phi = mixing_coefficient(5.0, 7.0, 1.0 - 1e-9)
        assert c == pytest.approx(1.0, abs=1e-8)
        assert phi == pytest.approx(1.0, abs=1e-8)

    def test_matches_paper_form_when_defined(self):
        rng = seeded_rng(1, "coef")
        for _ in range(500):
            s1, s2 = rng.uniform(1e-3, 100.0, size=2)
            l3 = rng.uniform(1e-4, 1.0 - 1e-4)
            c, phi = mixing_coefficient(s1, s2, l3)
            direct = 1.0 / (1.0 + (s1 / s2) * (1.0 - l3) / l3)
            assert c == pytest.approx(direct, rel=1e-12)
            assert phi == pytest.approx(math.hypot(c, 1.0 - c), rel=1e-15)

    def test_degenerate_sigmas(self):
        assert mixing_coefficient(4.0, 0.0, 0.3)[0] == 0.0
        assert mixing_coefficient(0.0, 4.0, 0.3)[0] == 1.0
        assert mixing_coefficient(0.0, 0.0, 0.3)[0] == pytest.approx(0.3)

    def test_rejects_endpoint_lambda3(self):
        with pytest.raises(ValueError):
            mixing_coefficient(1.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            mixing_coefficient(1.0, 1.0, 1.0)

    def test_phi_bounds(self):
        # phi = |(c, 1-c)| ranges over [sqrt(1/2), 1] for c in [0, 1].
        rng = seeded_rng(2, "phi")
        for _ in range(200):
            c, phi = mixing_coefficient(*rng.uniform(0.0, 9.0, size=2), rng.uniform(0.01, 0.99))
            assert math.sqrt(0.5) - 1e-12 <= phi <= 1.0 + 1e-12
            assert 0.0 <= c <= 1.0


class TestMixImages:
    def test_all_region_one(self):
        rng = seeded_rng(3, "r1")
        x1 = rng.uniform(0, 255, (6, 5))
        x2 = rng.uniform(0, 255, (6, 5))
        out = mix_images(x1, x2, MixLambdas(1.0, 1.0, 0.4))
        assert np.allclose(out, x1 - x1.mean(), atol=1e-12)

    def test_all_region_four(self):
        rng = seeded_rng(4, "r4")
        x1 = rng.uniform(0, 255, (6, 5))
        x2 = rng.uniform(0, 255, (6, 5))
        out = mix_images(x1, x2, MixLambdas(0.0, 0.0, 0.4))
        assert np.allclose(out, x2 - x2.mean(), atol=1e-12)

    def test_self_mix_regionwise(self):
        # x1 == x2: pure regions give x1 - mu, mixed regions (1/phi)(x1 - mu).
        rng = seeded_rng(5, "self")
        x = rng.uniform(0, 255, (8, 8))
        lam = MixLambdas(0.5, 0.5, 0.3)
        out = mix_images(x, x, lam)
        z = x - x.mean()
        c, phi = mixing_coefficient(x.std(), x.std(), lam.lambda3)
        assert c == pytest.approx(lam.lambda3)
        assert np.allclose(out[:4, :4], z[:4, :4], atol=1e-12)
        assert np.allclose(out[4:, 4:], z[4:, 4:], atol=1e-12)
        assert np.allclose(out[:4, 4:], z[:4, 4:] / phi, atol=1e-12)
        assert np.allclose(out[4:, :4], z[4:, :4] / phi, atol=1e-12)

    def test_against_pixel_oracle(self):
        rng = seeded_rng(6, "oracle")
        for trial in range(300):
            h, w = int(rng.integers(1, 9)), int(rng.integers(1, 9))
            x1 = rng.uniform(0, 255, (h, w))
            x2 = rng.uniform(0, 255, (h, w))
            lam = MixLambdas(float(rng.random()), float(rng.random()),
                             float(rng.uniform(1e-6, 1 - 1e-6)))
            got = mix_images(x1, x2, lam)
            want = mix_oracle(x1, x2, lam)
            assert np.max(np.abs(got - want)) <= 1e-9, f"trial {trial}"

    def test_oracle_with_degenerate_parents(self):
        rng = seeded_rng(7, "deg")
        flat = np.full((5, 6), 42.0)
        tex = rng.uniform(0, 255, (5, 6))
        for lam3 in (0.2, 0.5, 0.9):
            lam = MixLambdas(0.5, 0.5, lam3)
            for a, b in ((flat, tex), (tex, flat), (flat, flat)):
                got = mix_images(a, b, lam)
                want = mix_oracle(a, b, lam)
                assert np.max(np.abs(got - want)) <= 1e-9

    def test_threshold_pixel_ownership(self):
        # Row floor(l1*H) itself belongs to the lower region block.
        x1 = np.zeros((4, 4))
        x2 = np.full((4, 4), 8.0)
        out = mix_images(x1, x2, MixLambdas(0.5, 0.5, 0.5))
        # x2 is constant so sigma2 = 0 -> c = 0: mixed regions take only the
        # x1 component; rows/cols >= 2 in the x2 corner must be exactly zero
        # mean-subtracted x2 = 0.
        assert np.all(out[2:, 2:] == 0.0)

    def test_energy_preserved_in_mixed_regions(self):
        # Independent unit-std parents keep roughly unit std after blending.
        rng = seeded_rng(8, "energy")
        x1 = rng.normal(0.0, 1.0, (64, 64))
        x2 = rng.normal(0.0, 1.0, (64, 64))
        out = mix_images(x1, x2, MixLambdas(0.0, 1.0, 0.5))  # whole image mixed
        assert 0.9 < out.std() < 1.1

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mix_images(np.zeros((4, 4)), np.zeros((4, 5)), MixLambdas(0.5, 0.5, 0.5))

    def test_output_roughly_zero_mean(self):
        rng = seeded_rng(9, "zm")
        for _ in range(50):
            x1 = rng.uniform(0, 255, (16, 16))
            x2 = rng.uniform(0, 255, (16, 16))
            lam = MixLambdas(float(rng.random()), float(rng.random()), float(rng.uniform(0.1, 0.9)))
            out = mix_images(x1, x2, lam)
            # Each region is a slice of a zero-mean signal scaled by <= 1/phi
            # <= sqrt(2); the whole-image mean stays small relative to 255.
            assert abs(out.mean()) < 80.0


class TestMixLabels:
    def test_weights_sum_to_one(self):
        rng = seeded_rng(10, "labels")
        y1, y2 = one_hot(0, 3), one_hot(2, 3)
        for _ in range(2000):
            lam = MixLambdas(float(rng.random()), float(rng.random()),
                             float(rng.uniform(1e-6, 1 - 1e-6)))
            y = mix_labels(y1, y2, lam)
            assert abs(y.sum() - 1.0) <= 1e-12
            assert np.all(y >= 0)

    def test_formula_exact(self):
        y1, y2 = one_hot(0, 2), one_hot(1, 2)
        lam = MixLambdas(0.25, 0.75, 0.4)
        w1 = 0.4 * 0.25 + 0.6 * 0.75  # 0.55
        y = mix_labels(y1, y2, lam)
        assert y[0] == pytest.approx(w1, abs=1e-15)
        assert y[1] == pytest.approx(1.0 - w1, abs=1e-15)

    def test_pure_corners(self):
        y1, y2 = one_hot(0, 2), one_hot(1, 2)
        assert np.allclose(mix_labels(y1, y2, MixLambdas(1.0, 1.0, 0.5)), y1)
        assert np.allclose(mix_labels(y1, y2, MixLambdas(0.0, 0.0, 0.5)), y2)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mix_labels(one_hot(0, 2), one_hot(0, 3), MixLambdas(0.5, 0.5, 0.5))


class TestSampleLambdas:
    def test_uniform_at_m10(self):
        rng = seeded_rng(11, "m10")
        draws = np.array([sample_lambdas(10, rng).lambda1 for _ in range(10_000)])
        stat = stats.kstest(draws, "uniform").statistic
        assert stat < 0.05

    def test_bimodal_at_m1(self):
        rng = seeded_rng(12, "m1")
        draws = np.array([sample_lambdas(1, rng).lambda3 for _ in range(10_000)])
        inner = np.mean((draws > 0.1) & (draws < 0.9))
        # Independent oracle: mass of Beta(0.1, 0.1) inside (0.1, 0.9).
        expected = stats.beta.cdf(0.9, 0.1, 0.1) - stats.beta.cdf(0.1, 0.1, 0.1)
        assert expected < 0.25
        assert inner < 0.25
        assert abs(inner - expected) < 0.03

    def test_bounds_and_clamp(self):
        rng = seeded_rng(13, "clamp")
        for _ in range(10_000):
            lam = sample_lambdas(1, rng)
            assert 0.0 <= lam.lambda1 <= 1.0
            assert 0.0 <= lam.lambda2 <= 1.0
            assert LAMBDA3_EPS <= lam.lambda3 <= 1.0 - LAMBDA3_EPS

    def test_rejects_bad_m(self):
        rng = seeded_rng(14, "badm")
        with pytest.raises(ValueError):
            sample_lambdas(0, rng)
        with pytest.raises(ValueError):
            sample_lambdas(11, rng)

    def test_deterministic(self):
        a = sample_lambdas(5, seeded_rng(15, "det"))
        b = sample_lambdas(5, seeded_rng(15, "det"))
        assert a == b


class TestMixLambdasType:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            MixLambdas(-0.1, 0.5, 0.5)
        with pytest.raises(ValueError):
            MixLambdas(0.5, 1.1, 0.5)
        with pytest.raises(ValueError):
            MixLambdas(0.5, 0.5, 0.0)
        with pytest.raises(ValueError):
            MixLambdas(0.5, 0.5, 1.0)


def _examples(counts):
    """counts[class] copies of a tiny image, unique source ids."""
    classes = len(counts)
    out = []
    rng = seeded_rng(99, "mkex")
    for cls, k in enumerate(counts):
        for i in range(k):
            img = rng.uniform(0, 255, (4, 4))
            out.append(LabeledExample(img, one_hot(cls, classes), f"c{cls}i{i}"))
    return out


class TestPairDataset:
    def test_balanced_two_class(self):
        pairs, rest = pair_dataset(_examples([2, 2]), seeded_rng(20, "p"))
        assert len(pairs) == 2
        assert rest == []
        for a, b in pairs:
            assert a.label.argmax() != b.label.argmax()

    def test_imbalanced(self):
        pairs, rest = pair_dataset(_examples([3, 1]), seeded_rng(21, "p"))
        assert len(pairs) == 1
        assert len(rest) == 2
        assert all(e.label.argmax() == 0 for e in rest)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            pair_dataset(_examples([4]), seeded_rng(22, "p"))

    def test_matching_is_maximum(self):
        # Oracle: max cross-class matching size = min(N//2, N - max bucket).
        rng = seeded_rng(23, "max")
        for _ in range(100):
            counts = [int(rng.integers(0, 8)) for _ in range(4)]
            while sum(1 for k in counts if k > 0) < 2:
                counts = [int(rng.integers(0, 8)) for _ in range(4)]
            exs = _examples(counts)
            pairs, rest = pair_dataset(exs, rng)
            n = sum(counts)
            want = min(n // 2, n - max(counts))
            assert len(pairs) == want
            assert len(rest) == n - 2 * want
            used = [e.source_id for p in pairs for e in p] + [e.source_id for e in rest]
            assert sorted(used) == sorted(e.source_id for e in exs)

    def test_pairing_random_but_deterministic(self):
        exs = _examples([6, 6])
        p1, _ = pair_dataset(exs, seeded_rng(24, "s"))
        p2, _ = pair_dataset(exs, seeded_rng(24, "s"))
        p3, _ = pair_dataset(exs, seeded_rng(25, "s"))
        ids = lambda ps: [(a.source_id, b.source_id) for a, b in ps]
        assert ids(p1) == ids(p2)
        assert ids(p1) != ids(p3)


class TestAssembly:
    def test_nonlinear_mix_label_exact(self):
        exs = _examples([1, 1])
        lam = MixLambdas(0.3, 0.6, 0.7)
        mixed = nonlinear_mix(exs[0], exs[1], lam)
        assert np.array_equal(mixed.label, mix_labels(exs[0].label, exs[1].label, lam))
        assert mixed.parents == (exs[0].source_id, exs[1].source_id)
        assert mixed.image.shape == exs[0].image.shape

    def test_linear_mixup_stays_raw_range(self):
        x1 = np.full((4, 4), 100.0)
        x2 = np.full((4, 4), 200.0)
        out = linear_mixup(x1, x2, one_hot(0, 2), one_hot(1, 2), 0.25)
        assert np.allclose(out.image, 175.0)
        assert np.allclose(out.label, [0.25, 0.75])
