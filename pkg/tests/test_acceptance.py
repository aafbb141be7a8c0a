"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see only these lines.
"""

import functools
from fractions import Fraction

import numpy as np

from oracles import bec_recursion, exact_z
from rcpolar.alignment import build_alignment_step, mismatch_sets, propagate_reliability
from rcpolar.channels import capacity, make_bec, make_bsc, make_explicit
from rcpolar.construction import evolve_reliability, select_L
from rcpolar.harq import SimulationConfig, monte_carlo
from rcpolar.ratecompat import build_scheme, chain_repeat_map, encode_session, rate_profile

SEED = 2024


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


@functools.lru_cache(maxsize=None)
def c6_scheme():
    """BEC(0.3) / BSC(0.11), rates (0.55, 0.35), the smallest k with integral set sizes."""
    return build_scheme([make_bec(0.3), make_bsc(0.11)], rate_profile(77, ["11/20", "7/20"]),
                        puncture_trials=4, seed=1)


@functools.lru_cache(maxsize=None)
def control_scheme():
    return build_scheme([make_bec(0.3), make_bec(0.5)], rate_profile(77, ["11/20", "7/20"]),
                        puncture_trials=4, seed=1)


@functools.lru_cache(maxsize=None)
def aligned_pair_scheme():
    return build_scheme([make_bsc(0.05), make_bec(0.4)], rate_profile(135, ["135/256", "45/128"]), delta=1e-3)


def c3_run():
    scheme = build_scheme([make_bec(0.5)], rate_profile(300, ["3/10"]))
    return scheme, monte_carlo(SimulationConfig(scheme, 1, trials=10_000, seed=SEED))


def c7_runs():
    out = {}
    for name, scheme in (("family", c6_scheme()), ("control", control_scheme())):
        for link in (1, 2):
            out[name, link] = monte_carlo(SimulationConfig(scheme, link, trials=5_000, seed=SEED))
    return out


@functools.lru_cache(maxsize=None)
def c3_cached():
    return c3_run()


@functools.lru_cache(maxsize=None)
def c7_cached():
    return c7_runs()


def test_criterion_01_bec_exactness(capsys):
    worst, brute = 0.0, 0.0
    for n in range(1, 11):
        m = 2 ** n
        for eps in (0.1, 0.3, 0.5):
            z = evolve_reliability(make_bec(eps), m).z_bounds
            worst = max(worst, float(np.abs(z - bec_recursion(eps, m)).max()))
            if m <= 8:
                brute = max(brute, float(np.abs(z - exact_z([make_bec(eps).transitions] * m)).max()))
    report(capsys, 1, worst <= 1e-12 and brute <= 1e-12,
           f"max deviation from erasure recursion {worst:.2e}, from enumeration {brute:.2e}")


def test_criterion_02_upper_bounds(capsys):
    rng = np.random.default_rng(SEED)
    worst, cases = np.inf, 0
    erased = make_bec(1.0).transitions
    for _ in range(100):
        m = int(rng.choice([2, 4, 8]))
        if rng.random() < 0.5:
            W = make_bsc(float(rng.uniform(0.01, 0.45)))
        else:
            a, b = rng.uniform(0.0, 0.45, 2)
            w = rng.uniform(0.1, 0.9)
            W = make_explicit([[w * (1 - a), w * a], [w * a, w * (1 - a)],
                               [(1 - w) * (1 - b), (1 - w) * b], [(1 - w) * b, (1 - w) * (1 - b)]])
        punct = set(rng.choice(m, int(rng.integers(0, m)), replace=False).tolist())
        z = evolve_reliability(W, m, punct).z_bounds
        truth = exact_z([erased if k in punct else W.transitions for k in range(m)])
        worst = min(worst, float((z - truth).min()))
        cases += 1
    report(capsys, 2, cases == 100 and worst >= -1e-9, f"{cases} cases, min(z_bound - exact Z) = {worst:.3e}")


def test_criterion_03_union_bound_single_stage(capsys):
    scheme, res = c3_cached()
    st = res.stages[0]
    ok = scheme.stage(1).m == 1024 and res.trials == 10_000 and st.bound_respected
    report(capsys, 3, ok, f"FER {st.fer:.3g} (95% CI {st.ci_low:.3g}..{st.ci_high:.3g}) vs bound {st.union_bound:.4g}, "
                          f"m={scheme.stage(1).m}, punctured {len(scheme.stage(1).punctured_set)}")


def random_profile(rng):
    while True:
        K = int(rng.integers(1, 6))
        rates = sorted({Fraction(int(rng.integers(1, 10)), int(rng.integers(2, 11))) for _ in range(K)}, reverse=True)
        rates = [r for r in rates if r < Fraction(19, 20)]
        if not rates:
            continue
        k = 1
        while True:
            cum = [k / r for r in rates]
            inc = [b - a for a, b in zip([0] + cum, cum)]
            if all(c.denominator == 1 for c in cum) and all(
                    (inc[i] * rates[j]).denominator == 1 for i in range(len(rates)) for j in range(i, len(rates))):
                break
            k += 1
        if k / rates[-1] <= 600:
            return rate_profile(k, rates)


def test_criterion_04_repeat_count_identity(capsys):
    rng = np.random.default_rng(SEED)
    checked, bad = 0, []
    for _ in range(200):
        p = random_profile(rng)
        s = build_scheme([make_bec(float(1 - r - Fraction(1, 20))) for r in p.rates], p)
        for ell in range(2, p.K + 1):
            checked += 1
            if not len(chain_repeat_map(s, ell)) == s.stage(ell).sets[ell].size == p.size(ell, ell):
                bad.append((p.k, p.rates, ell))
    report(capsys, 4, not bad, f"200 profiles, {checked} stage checks, {len(bad)} violations")


def test_criterion_05_halving(capsys):
    rng = np.random.default_rng(SEED)
    delta, bad, done = 0.1, 0, 0
    while done < 100:
        n = int(rng.integers(4, 129))
        status = rng.choice(4, n)  # 0 both, 1 current only, 2 next only, 3 neither
        n1, n2 = np.count_nonzero(status == 1), np.count_nonzero(status == 2)
        if n2 == 0 or n1 < n2:
            continue
        good = rng.uniform(0, delta, n)
        poor = rng.uniform(delta, 1, n) + 1e-12
        z_cur = np.where((status == 0) | (status == 1), good, poor)
        z_next = np.where((status == 0) | (status == 2), rng.uniform(0, delta, n), rng.uniform(delta, 1, n) + 1e-12)
        D, Dp = mismatch_sets(np.flatnonzero(z_next <= delta), np.flatnonzero(z_cur <= delta), z_cur)
        step = build_alignment_step(D, Dp, n)
        zc, zn = propagate_reliability(step, z_cur, z_cur), propagate_reliability(step, z_next, z_next)
        mm_before = 2 * n2
        both_before = 2 * np.count_nonzero(status == 0)
        mm_after = np.count_nonzero((zn <= delta) & (zc > delta))
        both_after = np.count_nonzero((zn <= delta) & (zc <= delta))
        bad += not (2 * mm_after == mm_before and both_after == both_before + len(D))
        done += 1
    report(capsys, 5, bad == 0, f"{done} configurations, {bad} violations of halving / +|D| growth")


def test_criterion_06_nesting_non_degraded(capsys):
    s = c6_scheme()
    p_bec = evolve_reliability(make_bec(0.3), 256)
    p_bsc = evolve_reliability(make_bsc(0.11), 256)
    z_bec, z_bsc = p_bec.z_bounds, p_bsc.z_bounds
    L1, L2 = set(select_L(p_bec)), set(select_L(p_bsc))
    only1, only2 = len(L1 - L2), len(L2 - L1)
    exhibited = only1 > 0 and only2 > 0
    nested = all(set(st.sets[j + 1]) <= set(st.sets[j]) for st in s.stages for j in range(st.index, s.K))
    t = max(st.steps_needed for st in s.stages)
    loss_ok = all(st.rate_loss <= (s.K - 1) * 2.0 ** -st.steps_needed for st in s.stages)
    ok = exhibited and nested and t <= 8 and loss_ok
    report(capsys, 6, ok, f"m=256, delta={s.delta:g}: |L_BEC minus L_BSC|={only1}, |L_BSC minus L_BEC|={only2}, "
                          f"indices where z_BSC < z_BEC: {int(np.count_nonzero(z_bsc < z_bec))}; built with T={s.T}, "
                          f"nested={nested}, t={t}, rate loss ok={loss_ok}")


def test_criterion_07_end_to_end(capsys):
    runs = c7_cached()
    lines, ok = [], True
    for name, scheme in (("family", c6_scheme()), ("control", control_scheme())):
        for link in (1, 2):
            st = runs[name, link].stages[link - 1]
            ok &= st.bound_respected and st.trials_reaching > 0
            lines.append(f"{name} W{link}: stage-{link} FER {st.fer:.3g} [{st.ci_low:.3g}, {st.ci_high:.3g}] "
                         f"<= bound {st.union_bound:.3g}")
    ok &= control_scheme().T == 0
    report(capsys, 7, ok, "; ".join(lines) + f"; control T={control_scheme().T}")


def test_criterion_08_prefix_identity(capsys):
    rng = np.random.default_rng(SEED)
    bad = 0
    for s in (c6_scheme(), aligned_pair_scheme()):
        for _ in range(100):
            info = rng.integers(0, 2, s.k, dtype=np.uint8)
            full = np.concatenate(encode_session(s, info)[1])
            for ell in range(1, s.K):
                part = np.concatenate(encode_session(s, info, upto=ell)[1])
                bad += not (part.size == s.cumulative_transmitted(ell) and (full[:part.size] == part).all())
    report(capsys, 8, bad == 0, f"200 sessions over 2 schemes, {bad} prefix mismatches")


def test_criterion_09_expansion_and_rate_loss(capsys):
    rows, ok = [], True
    for name, s in (("criterion 6/7", c6_scheme()), ("control", control_scheme()),
                    ("aligned pair", aligned_pair_scheme())):
        exp_ok = s.expansion_factor <= 2 ** ((s.K - 1) * s.t_max)
        loss_ok = all(st.rate_loss <= (s.K - 1) * 2.0 ** -st.steps_needed for st in s.stages)
        ok &= exp_ok and loss_ok
        rows.append(f"{name}: expansion {s.expansion_factor}, losses "
                    f"{[round(st.rate_loss, 6) for st in s.stages]}")
    report(capsys, 9, ok, "; ".join(rows))


def test_criterion_10_determinism(capsys):
    _, first3 = c3_cached()
    _, again3 = c3_run()
    first7, again7 = c7_cached(), c7_runs()
    same = first3.to_csv() == again3.to_csv() and all(first7[k].to_csv() == again7[k].to_csv() for k in first7)
    report(capsys, 10, same, "criterion 3 and 7 reruns with the same seed give byte-identical CSV")


def test_supplementary_aligned_pair(capsys):
    """A pair that really is mismatched: one alignment step, then the union bound holds on the W2 link."""
    s = aligned_pair_scheme()
    one = s.stage(1)
    _, _, f0, steps, f1 = one.pairs[0]
    res = monte_carlo(SimulationConfig(s, 2, trials=2_000, seed=SEED))
    st = res.stages[1]
    ok = s.T == 1 and f1 == f0 / 2 and st.bound_respected and capacity(s.channels[0]) > capacity(s.channels[1])
    with capsys.disabled():
        print(f"\nsupplementary: {'PASS' if ok else 'FAIL'} (T={s.T}, mismatch {f0:g} -> {f1:g} after {steps} step, "
              f"W2 stage-2 FER {st.fer:.3g} [{st.ci_low:.3g}, {st.ci_high:.3g}] vs bound {st.union_bound:.3g})")
    assert ok
