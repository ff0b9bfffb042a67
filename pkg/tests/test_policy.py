"""Policy assembly: plan sampling, pipeline composition, SNPol, config I/O."""

import numpy as np
import pytest

from augsearch.core import LabeledExample, PolicyConfig, Variant, one_hot, seeded_rng
from augsearch.mixer import mix_images, mix_labels
from augsearch.policy import (
    active_catalog,
    augment,
    policy_from_text,
    policy_to_text,
    sample_plan,
    sn_pol_apply,
    sn_pol_augment,
)
from augsearch.transforms import flip


def _ex(cls=0, classes=2, label="pex", sid=None):
    rng = seeded_rng(500, label)
    img = rng.uniform(0, 255, (16, 16))
    return LabeledExample(img, one_hot(cls, classes), sid or f"{label}-{cls}")


class TestActiveCatalog:
    def test_sizes_per_variant(self):
        assert len(active_catalog(Variant.NO_AUG)) == 0
        assert len(active_catalog(Variant.SN_POL)) == 0
        assert len(active_catalog(Variant.RA)) == 15
        assert len(active_catalog(Variant.RA_SPECKLE)) == 16
        assert len(active_catalog(Variant.RA_DEFORM)) == 17
        assert len(active_catalog(Variant.EXT_RA)) == 18
        assert len(active_catalog(Variant.LINEAR_MIX)) == 18
        assert len(active_catalog(Variant.NONLINEAR_MIX)) == 18

    def test_sub_catalog_membership(self):
        speckle_ids = {d.id for d in active_catalog(Variant.RA_SPECKLE)}
        assert "speckle_noise" in speckle_ids
        assert "elastic_deform" not in speckle_ids
        deform_ids = {d.id for d in active_catalog(Variant.RA_DEFORM)}
        assert {"grid_distortion", "elastic_deform"} <= deform_ids
        assert "speckle_noise" not in deform_ids


class TestSamplePlan:
    def test_n_zero_empty_chosen_flips_drawn(self):
        cfg = PolicyConfig(variant=Variant.EXT_RA, m=5, n=0)
        flips = set()
        for i in range(100):
            plan = sample_plan(cfg, seeded_rng(i, "p0"))
            assert plan.chosen == ()
            flips.add((plan.flip_h, plan.flip_v))
        assert len(flips) == 4  # both booleans actually vary

    def test_lambdas_only_for_mixing(self):
        rng = seeded_rng(1, "lam")
        assert sample_plan(PolicyConfig(variant=Variant.NONLINEAR_MIX), rng).lambdas is not None
        assert sample_plan(PolicyConfig(variant=Variant.LINEAR_MIX), rng).lambdas is not None
        assert sample_plan(PolicyConfig(variant=Variant.EXT_RA), rng).lambdas is None
        assert sample_plan(PolicyConfig(variant=Variant.NO_AUG), rng).lambdas is None

    def test_with_replacement_uniform_frequencies(self):
        # Each of the 18 ids lands within 5 sigma of n/18 per draw slot.
        cfg = PolicyConfig(variant=Variant.EXT_RA, m=5, n=3)
        rng = seeded_rng(2, "freq")
        trials = 10_000
        counts = {}
        for _ in range(trials):
            for tid in sample_plan(cfg, rng).chosen:
                counts[tid] = counts.get(tid, 0) + 1
        total = trials * 3
        p = 1.0 / 18.0
        sigma = np.sqrt(total * p * (1 - p))
        assert len(counts) == 18
        for tid, k in counts.items():
            assert abs(k - total * p) < 5 * sigma, tid

    def test_duplicate_rate_matches_with_replacement(self):
        # P(all 3 distinct of 18) = 17*16/18^2 ~ 0.8395.
        cfg = PolicyConfig(variant=Variant.EXT_RA, m=5, n=3)
        rng = seeded_rng(3, "dup")
        trials = 10_000
        distinct = sum(
            len(set(sample_plan(cfg, rng).chosen)) == 3 for _ in range(trials)
        )
        assert abs(distinct / trials - (17 * 16) / (18 * 18)) < 0.02

    def test_suppress_flips_keeps_draw_stream_aligned(self):
        # The two flip draws are still consumed, so the rest of the plan is
        # unchanged by the hook.
        base = PolicyConfig(variant=Variant.EXT_RA, m=5, n=4, seed=9)
        quiet = PolicyConfig(variant=Variant.EXT_RA, m=5, n=4, seed=9, suppress_flips=True)
        p1 = sample_plan(base, seeded_rng(9, "s"))
        p2 = sample_plan(quiet, seeded_rng(9, "s"))
        assert not p2.flip_h and not p2.flip_v
        assert p1.chosen == p2.chosen

    def test_plan_deterministic(self):
        cfg = PolicyConfig(variant=Variant.NONLINEAR_MIX, m=7, n=5)
        a = sample_plan(cfg, seeded_rng(4, "det"))
        b = sample_plan(cfg, seeded_rng(4, "det"))
        assert a == b

    def test_chosen_within_active_catalog(self):
        for variant in (Variant.RA, Variant.RA_SPECKLE, Variant.RA_DEFORM):
            allowed = {d.id for d in active_catalog(variant)}
            cfg = PolicyConfig(variant=variant, m=5, n=6)
            rng = seeded_rng(5, variant.value)
            for _ in range(200):
                assert set(sample_plan(cfg, rng).chosen) <= allowed


class TestAugment:
    def test_noaug_is_flips_only(self):
        ex = _ex(label="noaug")
        cfg = PolicyConfig(variant=Variant.NO_AUG, m=1, n=0, seed=1)
        seen = set()
        for i in range(50):
            out = augment(ex, cfg, seeded_rng(i, "na"))
            assert np.array_equal(out.label, ex.label)
            h = np.array_equal(out.image, flip(ex.image, "horizontal"))
            v = np.array_equal(out.image, flip(ex.image, "vertical"))
            hv = np.array_equal(out.image, flip(flip(ex.image, "horizontal"), "vertical"))
            ident = np.array_equal(out.image, ex.image)
            assert h or v or hv or ident
            seen.add((h, v, hv, ident))
        assert len(seen) >= 3  # several flip outcomes actually occur

    def test_noaug_suppressed_is_identity(self):
        ex = _ex(label="ident")
        cfg = PolicyConfig(variant=Variant.NO_AUG, m=1, n=0, suppress_flips=True)
        out = augment(ex, cfg, seeded_rng(0, "id"))
        assert np.array_equal(out.image, ex.image)
        assert np.array_equal(out.label, ex.label)
        assert out.source_id == ex.source_id

    def test_nonlinear_pair_corner_case(self):
        # lambda1 = lambda2 = 1 puts every pixel in the pure-x1 region.
        ex1, ex2 = _ex(0, label="a"), _ex(1, label="b")
        cfg = PolicyConfig(variant=Variant.NONLINEAR_MIX, m=5, n=0, suppress_flips=True)
        for i in range(300):
            rng = seeded_rng(i, "corner")
            out = augment((ex1, ex2), cfg, rng)
            lam = sample_plan(cfg, seeded_rng(i, "corner")).lambdas
            want_img = mix_images(ex1.image, ex2.image, lam)
            want_lab = mix_labels(ex1.label, ex2.label, lam)
            assert np.array_equal(out.image, want_img)
            assert np.array_equal(out.label, want_lab)
            assert out.source_id == f"{ex1.source_id}+{ex2.source_id}"

    def test_mixing_leftover_passes_through(self):
        ex = _ex(0, label="left")
        cfg = PolicyConfig(variant=Variant.NONLINEAR_MIX, m=5, n=0, suppress_flips=True)
        out = augment(ex, cfg, seeded_rng(1, "lo"))
        assert np.array_equal(out.image, ex.image)
        assert np.array_equal(out.label, ex.label)

    def test_linear_mix_stays_raw_range(self):
        ex1, ex2 = _ex(0, label="l1"), _ex(1, label="l2")
        cfg = PolicyConfig(variant=Variant.LINEAR_MIX, m=10, n=0, suppress_flips=True)
        out = augment((ex1, ex2), cfg, seeded_rng(2, "lin"))
        lam = sample_plan(cfg, seeded_rng(2, "lin")).lambdas
        want = lam.lambda3 * ex1.image + (1 - lam.lambda3) * ex2.image
        assert np.allclose(out.image, want, atol=1e-12)
        assert out.image.min() >= 0.0  # convex combination of raw images

    def test_pair_rejected_for_non_mixing(self):
        ex1, ex2 = _ex(0, label="x"), _ex(1, label="y")
        for variant in (Variant.NO_AUG, Variant.RA, Variant.EXT_RA, Variant.SN_POL):
            with pytest.raises(ValueError):
                augment((ex1, ex2), PolicyConfig(variant=variant), seeded_rng(3, "rej"))

    def test_deterministic(self):
        ex = _ex(label="det2")
        cfg = PolicyConfig(variant=Variant.EXT_RA, m=8, n=4)
        a = augment(ex, cfg, seeded_rng(6, "d"))
        b = augment(ex, cfg, seeded_rng(6, "d"))
        assert np.array_equal(a.image, b.image)

    def test_dimensions_preserved(self):
        rng = seeded_rng(7, "dims")
        img = rng.uniform(0, 255, (24, 17))
        ex = LabeledExample(img, one_hot(0, 3), "dims")
        for variant in Variant:
            cfg = PolicyConfig(variant=variant, m=9, n=5)
            out = augment(ex, cfg, seeded_rng(8, variant.value))
            assert out.image.shape == (24, 17), variant
            assert out.label.shape == (3,)


class TestSnPol:
    def test_identity_draws_near_exact(self):
        img = seeded_rng(9, "snid").uniform(0, 255, (32, 32))
        out = sn_pol_apply(img, False, 0.0, 0.0, 0.0, 1.0, 1.0, seeded_rng(0, "u"))
        assert np.max(np.abs(out - img)) < 1e-6

    def test_brightness_draw(self):
        img = np.full((8, 8), 100.0)
        out = sn_pol_apply(img, False, 0.0, 0.0, 0.0, 1.25, 1.0, seeded_rng(0, "u"))
        assert np.allclose(out, 125.0)

    def test_crop_keeps_dimensions(self):
        img = seeded_rng(10, "crop").uniform(0, 255, (20, 30))
        out = sn_pol_apply(img, False, 0.0, 0.0, 0.0, 1.0, 0.95, seeded_rng(1, "u"))
        assert out.shape == (20, 30)

    def test_label_unchanged_and_deterministic(self):
        ex = _ex(1, label="sn")
        a = sn_pol_augment(ex, seeded_rng(11, "sn"))
        b = sn_pol_augment(ex, seeded_rng(11, "sn"))
        assert np.array_equal(a.label, ex.label)
        assert np.array_equal(a.image, b.image)

    def test_draw_ranges(self):
        # Flip draw varies; rotated/cropped outputs differ from the input.
        ex = _ex(0, label="snr")
        outs = [sn_pol_augment(ex, seeded_rng(i, "range")) for i in range(20)]
        assert any(not np.array_equal(o.image, outs[0].image) for o in outs[1:])


class TestPolicyText:
    def test_round_trip(self):
        cfg = PolicyConfig(variant=Variant.NONLINEAR_MIX, m=7, n=2, seed=123)
        assert policy_from_text(policy_to_text(cfg)) == cfg

    def test_comments_and_spacing(self):
        cfg = policy_from_text("# a policy\nvariant = ExtRA\n\nm=9  # strong\nn = 1\n")
        assert cfg.variant is Variant.EXT_RA
        assert cfg.m == 9
        assert cfg.n == 1
        assert cfg.seed == 0

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            policy_from_text("variant = RA\nbogus = 1\n")

    def test_unknown_variant_rejected(self):
        with pytest.raises(ValueError, match="unknown variant"):
            policy_from_text("variant = MegaAug\n")

    def test_missing_variant_rejected(self):
        with pytest.raises(ValueError, match="variant"):
            policy_from_text("m = 5\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            policy_from_text("variant = RA\nm = 3\nm = 4\n")

    def test_out_of_range_m_rejected(self):
        with pytest.raises(ValueError):
            policy_from_text("variant = RA\nm = 0\n")
