import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bec_recursion, exact_z
from rcpolar.channels import make_bec, make_bsc, make_explicit
from rcpolar.construction import (ReliabilityProfile, choose_puncture, evolve_reliability, puncture_score, select_A,
                                  select_L)

BEC4 = [0.9375, 0.5625, 0.4375, 0.0625]


def tables(W, m, punctured=()):
    erased = make_bec(1.0).transitions
    return [erased if k in set(punctured) else W.transitions for k in range(m)]


class TestEvolve:
    def test_m1(self):
        assert evolve_reliability(make_bsc(0.1), 1).z_bounds.tolist() == pytest.approx([0.6])

    def test_bec_example(self):
        prof = evolve_reliability(make_bec(0.5), 4)
        assert prof.z_bounds == pytest.approx(BEC4, abs=1e-15)
        assert exact_z(tables(make_bec(0.5), 4)) == pytest.approx(BEC4, abs=1e-12)

    def test_all_punctured(self):
        assert (evolve_reliability(make_bsc(0.1), 8, range(8)).z_bounds == 1.0).all()

    @pytest.mark.parametrize("m", [6, 0])
    def test_rejects_length(self, m):
        with pytest.raises(ValueError):
            evolve_reliability(make_bec(0.5), m)

    def test_rejects_puncture_index(self):
        with pytest.raises(ValueError):
            evolve_reliability(make_bec(0.5), 4, [4])

    @given(st.floats(0, 1), st.integers(0, 6), st.data())
    @settings(max_examples=40, deadline=None)
    def test_bec_exact_with_puncturing(self, eps, n, data):
        m = 2 ** n
        punct = data.draw(st.sets(st.integers(0, m - 1)))
        got = evolve_reliability(make_bec(eps), m, punct).z_bounds
        assert np.abs(got - bec_recursion(eps, m, punct)).max() <= 1e-12

    @given(st.floats(0.01, 0.45), st.integers(1, 3), st.data())
    @settings(max_examples=30, deadline=None)
    def test_upper_bounds_small(self, p, n, data):
        m = 2 ** n
        four = make_explicit([[0.6, 0.05], [0.3, 0.05], [0.05, 0.3], [0.05, 0.6]])
        W = data.draw(st.sampled_from([make_bsc(p), four]))
        punct = data.draw(st.sets(st.integers(0, m - 1), max_size=m - 1))
        mu = data.draw(st.sampled_from([2, 4, 64]))
        got = evolve_reliability(W, m, punct, mu=mu).z_bounds
        assert (got >= exact_z(tables(W, m, punct)) - 1e-9).all()

    def test_exact_when_no_merge_needed(self):
        W = make_bsc(0.1)
        got = evolve_reliability(W, 4, mu=1024).z_bounds
        assert got == pytest.approx(exact_z(tables(W, 4)), abs=1e-12)

    def test_polarization_exact_fraction(self):
        z = evolve_reliability(make_bec(0.5), 1024).z_bounds
        assert np.count_nonzero(z <= 0.01) == 382

    @pytest.mark.xfail(strict=True, reason="stated 0.08 window is too tight at m=1024; exact fraction is 0.373")
    def test_polarization_sanity_window(self):
        z = evolve_reliability(make_bec(0.5), 1024).z_bounds
        assert abs(np.mean(z <= 0.01) - 0.5) <= 0.08

    def test_bsc_within_unit_interval(self):
        z = evolve_reliability(make_bsc(0.11), 256, mu=16).z_bounds
        assert ((0 <= z) & (z <= 1)).all()


class TestSelect:
    prof = evolve_reliability(make_bec(0.5), 4)

    def test_L(self):
        assert select_L(ReliabilityProfile(4, "x", self.prof.z_bounds, delta=1.0)).tolist() == [0, 1, 2, 3]
        assert select_L(ReliabilityProfile(4, "x", self.prof.z_bounds, delta=0.0)).size == 0
        assert (select_L(ReliabilityProfile(4, "x", self.prof.z_bounds, delta=0.1)) + 1).tolist() == [4]

    def test_A(self):
        assert select_A(self.prof, 0).size == 0
        assert (select_A(self.prof, 2) + 1).tolist() == [3, 4]
        assert select_A(self.prof, 4).tolist() == [0, 1, 2, 3]
        with pytest.raises(ValueError):
            select_A(self.prof, 5)

    def test_A_ties_to_smaller_index(self):
        prof = ReliabilityProfile(4, "x", np.array([0.5, 0.1, 0.5, 0.1]))
        assert select_A(prof, 1).tolist() == [1]
        assert select_A(prof, 3).tolist() == [0, 1, 3]

    def test_A_warns_outside_L(self, caplog):
        with caplog.at_level("WARNING"):
            select_A(self.prof, 2)
        assert "exceed delta" in caplog.text

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=64), st.data())
    @settings(max_examples=60, deadline=None)
    def test_A_nested_in_size(self, z, data):
        prof = ReliabilityProfile(len(z), "x", np.array(z))
        s1 = data.draw(st.integers(0, len(z)))
        s2 = data.draw(st.integers(s1, len(z)))
        assert set(select_A(prof, s1)) <= set(select_A(prof, s2))

    def test_fer_bound(self):
        assert self.prof.fer_bound([2, 3]) == pytest.approx(0.5)
        assert self.prof.fer_bound([0, 1, 2]) == 1.0
        assert self.prof.fer_bound([]) == 0.0

    def test_csv(self):
        lines = self.prof.to_csv().splitlines()
        assert lines[0] == "index,z_bound"
        assert lines[1:] == ["1,0.9375", "2,0.5625", "3,0.4375", "4,0.0625"]


class TestPuncture:
    def test_no_puncturing(self):
        pattern, prof = choose_puncture(16, 16, 3, make_bec(0.4), 4, seed=0)
        assert pattern == ()
        assert (prof.z_bounds == evolve_reliability(make_bec(0.4), 16).z_bounds).all()

    def test_single_trial_is_seeded_draw(self):
        a = choose_puncture(32, 20, 1, make_bec(0.4), 8, seed=7)[0]
        b = choose_puncture(32, 20, 1, make_bec(0.4), 8, seed=7)[0]
        assert a == b and len(a) == 12
        expect = tuple(np.sort(np.random.default_rng(7).choice(32, 12, replace=False)).tolist())
        assert a == expect

    def test_exhaustive_m4(self):
        W = make_bec(0.5)
        scores = [puncture_score(evolve_reliability(W, 4, [p]), 1) for p in range(4)]
        brute = [np.sort(bec_recursion(0.5, 4, [p]))[:1].sum() for p in range(4)]
        assert scores == pytest.approx(brute, abs=1e-12)
        pattern, prof = choose_puncture(4, 3, 64, W, 1, seed=0)
        assert puncture_score(prof, 1) == pytest.approx(min(brute), abs=1e-12)

    def test_best_of_trials_not_worse(self):
        W = make_bec(0.4)
        one = puncture_score(choose_puncture(64, 40, 1, W, 16, seed=3)[1], 16)
        many = puncture_score(choose_puncture(64, 40, 10, W, 16, seed=3)[1], 16)
        assert many <= one

    @pytest.mark.parametrize("args", [(8, 9, 1, 2), (8, 4, 0, 2), (8, 4, 1, 5), (6, 4, 1, 2)])
    def test_rejects(self, args):
        m, n, trials, info = args
        with pytest.raises(ValueError):
            choose_puncture(m, n, trials, make_bec(0.5), info, seed=0)

    def test_brute_force_upper_bound_with_patterns(self):
        W = make_bsc(0.2)
        for p in itertools.combinations(range(8), 2):
            got = evolve_reliability(W, 8, p).z_bounds
            assert (got >= exact_z(tables(W, 8, p)) - 1e-9).all()
