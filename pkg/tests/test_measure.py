from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssmf.errors import BadProbability, BoundsViolated, DuplicateRatio, TooLarge, TrivialIfs, ValidationError
from ssmf.measure import (
    IfsSpec,
    OriginalIfsSpec,
    aggregate_weights,
    discretize,
    load_spec,
    support_interval,
    validate_ifs,
    validate_original,
)


def spec_1d(a, p=(0.5, 0.5), g=0.5, **kw):
    return IfsSpec.from_groups([(g, list(a), list(p))], **kw)


class TestValidate:
    def test_bernoulli_not_ek(self):
        spec = validate_ifs(spec_1d((-1, 1)))
        assert not spec.ek_normalized
        assert spec.B1 == 2.0 and spec.B2 > spec.B1

    def test_pi_gap_is_ek(self):
        assert validate_ifs(spec_1d((0, math.pi))).ek_normalized

    def test_duplicate_ratio(self):
        spec = IfsSpec.from_groups([(0.5, [0], [0.5]), (0.5, [1], [0.5])])
        with pytest.raises(DuplicateRatio):
            validate_ifs(spec)

    def test_negative_probability(self):
        with pytest.raises(BadProbability):
            validate_ifs(spec_1d((0, 1), p=(1.2, -0.2)))

    def test_sum_off(self):
        with pytest.raises(BadProbability):
            validate_ifs(spec_1d((0, 1), p=(0.5, 0.4)))

    def test_renormalizes_within_slack(self):
        spec = validate_ifs(spec_1d((0, 1), p=(0.5, 0.5 + 5e-11)))
        assert sum(spec.probs[0]) == pytest.approx(1.0, abs=1e-15)

    def test_trivial(self):
        with pytest.raises(TrivialIfs):
            validate_ifs(spec_1d((1, 1)))

    def test_cond1(self):
        with pytest.raises(BoundsViolated):
            validate_ifs(spec_1d((0, 1), B1=3.0, B2=4.0))

    def test_bad_ratio(self):
        with pytest.raises(BoundsViolated):
            validate_ifs(spec_1d((0, 1), g=1.0))

    def test_errors_are_value_errors(self):
        assert issubclass(DuplicateRatio, ValidationError)
        assert issubclass(ValidationError, ValueError)

    def test_json_roundtrip(self, tmp_path, two_group):
        path = tmp_path / "s.json"
        path.write_text(json.dumps(two_group.to_dict()))
        assert load_spec(path) == two_group

    def test_missing_field(self):
        with pytest.raises(ValidationError, match="missing"):
            IfsSpec.from_dict({"groups": [{"ratio": 0.5}]})


class TestOriginal:
    def test_grouping(self):
        orig = validate_original(OriginalIfsSpec((0.5, 0.5, 0.3), (0, 1, 2), (0.2, 0.3, 0.5)))
        spec = validate_ifs(orig.as_ifs_spec())
        assert spec.gamma == (0.5, 0.3)
        assert spec.translations[0] == (0.0, 1.0)

    def test_needs_two_maps(self):
        with pytest.raises(ValidationError):
            validate_original(OriginalIfsSpec((0.5,), (1.0,), (1.0,)))

    def test_trivial(self):
        with pytest.raises(TrivialIfs):
            validate_original(OriginalIfsSpec((0.5, 0.25), (1.0, 1.5), (0.5, 0.5)))


class TestSupport:
    def test_bernoulli(self):
        sup = support_interval(validate_ifs(spec_1d((-1, 1))))
        assert (sup.lo, sup.hi) == pytest.approx((-2, 2), abs=1e-12)
        assert sup.radius == pytest.approx(2)

    def test_single_map(self):
        sup = support_interval(validate_ifs(IfsSpec.from_groups(
            [(0.5, [3.0], [0.5]), (0.25, [0.0], [0.5])])))
        assert sup.lo == pytest.approx(0.0) and sup.hi == pytest.approx(6.0)

    def test_single_fixed_point_hull(self):
        # hull of one map alone is its fixed point
        spec = IfsSpec.from_groups([(0.5, [3.0], [1.0])])
        sup = support_interval(spec)
        assert (sup.lo, sup.hi) == pytest.approx((6.0, 6.0))

    def test_pi_gap(self):
        sup = support_interval(validate_ifs(spec_1d((0, math.pi))))
        assert (sup.lo, sup.hi) == pytest.approx((0, 2 * math.pi), abs=1e-12)

    def test_invariant(self, two_group):
        sup = support_interval(two_group)
        for g, a, _ in two_group.maps():
            lo, hi = sorted((g * sup.lo + a, g * sup.hi + a))
            assert sup.lo - 1e-12 <= lo and hi <= sup.hi + 1e-12


class TestDiscretize:
    def test_depth_zero(self, bernoulli_half):
        atoms, w = discretize(bernoulli_half, 0)
        assert atoms.tolist() == [0.0] and w.tolist() == [1.0]

    def test_depth_one(self):
        spec = validate_ifs(spec_1d((-1, 1)))
        atoms, w = discretize(spec, 1, x0=1.0)
        assert sorted(atoms.tolist()) == [0.5 - 1, 0.5 + 1]
        assert w.tolist() == [0.5, 0.5]

    def test_depth_two(self, bernoulli_half):
        atoms, w = discretize(bernoulli_half, 2)
        assert len(atoms) == 4 and w.sum() == pytest.approx(1.0)

    def test_too_large(self, two_group):
        with pytest.raises(TooLarge):
            discretize(two_group, 20)

    @settings(max_examples=40, deadline=None)
    @given(
        g1=st.floats(0.2, 0.8), g2=st.floats(0.2, 0.8),
        a=st.lists(st.floats(-3, 3), min_size=3, max_size=3),
        N=st.integers(0, 6),
    )
    def test_weights_and_containment(self, g1, g2, a, N):
        if abs(g1 - g2) < 1e-3 or max(a) - min(a) < 1e-3:
            return
        lo_g, hi_g = min(g1, g2), max(g1, g2)
        spec = validate_ifs(IfsSpec.from_groups(
            [(g1, a[:2], [0.3, 0.3]), (g2, a[2:], [0.4])], B1=1 / hi_g, B2=1 / lo_g + 1e-3))
        atoms, w = discretize(spec, N)
        sup = support_interval(spec)
        assert abs(w.sum() - 1) <= 1e-12
        assert np.all(atoms >= sup.lo - 1e-12) and np.all(atoms <= sup.hi + 1e-12)


class TestAggregate:
    def test_two_groups(self):
        spec = validate_ifs(IfsSpec.from_groups([(0.5, [0, 1], [0.3, 0.2]), (0.4, [2], [0.5])]))
        w = aggregate_weights(spec)
        assert w.p == pytest.approx((0.5, 0.5)) and w.p_min == pytest.approx(0.5)

    def test_uniform_four(self):
        spec = validate_ifs(IfsSpec.from_groups([(0.25, [0, 1, 2, 3], [0.25] * 4)]))
        w = aggregate_weights(spec)
        assert w.p == pytest.approx((1.0,)) and w.p_min == pytest.approx(1.0)

    def test_skewed(self):
        spec = validate_ifs(IfsSpec.from_groups([(0.5, [0, 1], [0.1, 0.1]), (0.4, [2], [0.8])]))
        w = aggregate_weights(spec)
        assert w.p == pytest.approx((0.2, 0.8)) and w.p_min == pytest.approx(0.2)
        assert w.eps_floor == pytest.approx(0.1)
