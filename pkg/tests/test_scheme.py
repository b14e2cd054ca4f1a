"""Decoders, Monte Carlo arms, exponent, design conditions, rate budget."""

import math

import numpy as np
import pytest

from lgc.errors import (
    DimensionMismatch,
    FlatnessTooLarge,
    InsufficientErrors,
    MuBelowOne,
    NonpositiveSigma,
)
from lgc.lattice import closest_point, standard_lattice
from lgc.rng import RngSeed
from lgc.sampler import build_spec
from lgc.scheme import (
    BLOCK,
    CSV_HEADER,
    check_conditions,
    decode_agreement,
    design_volume,
    eps_prime_formula,
    feasible_volume_interval,
    make_params,
    map_decode,
    mmse_decode,
    mmse_gap,
    awgn,
    poltyrev_exponent,
    power_stats,
    rate_budget,
    rate_lower_formula,
    sandwich_check,
    simulate_error,
    simulate_poltyrev,
    vnr,
    wilson_interval,
)

Z1 = standard_lattice("Zn", 1)
Z2 = standard_lattice("Zn", 2)
Z4 = standard_lattice("Zn", 4)
Z8 = standard_lattice("Zn", 8)
D4 = standard_lattice("Dn", 4)
E8 = standard_lattice("E8")


# ---------------------------------------------------------------------------
# parameters and channel
# ---------------------------------------------------------------------------


def test_params_values():
    p = make_params(2.0, 1.0)
    assert p.alpha == pytest.approx(0.8, rel=1e-15)
    assert p.sigma_tilde ** 2 == pytest.approx(0.8, rel=1e-12)
    assert p.snr == pytest.approx(4.0, rel=1e-15)
    assert p.power == pytest.approx(4.0, rel=1e-15)
    q = make_params(1.0, 1.0)
    assert q.alpha == pytest.approx(0.5, rel=1e-15)
    assert q.sigma_tilde == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-15)
    # effective noise never exceeds either deviation
    assert q.sigma_tilde < min(q.sigma0, q.sigma)
    with pytest.raises(NonpositiveSigma):
        make_params(0.0, 1.0)
    with pytest.raises(NonpositiveSigma):
        make_params(1.0, -2.0)


def test_awgn():
    x = np.zeros(50000)
    y = awgn(x, 1.5, RngSeed(1, 0))
    assert y.shape == x.shape
    assert abs(np.mean(y)) < 0.02
    assert np.std(y) == pytest.approx(1.5, rel=0.02)
    again = awgn(x, 1.5, RngSeed(1, 0))
    assert np.array_equal(y, again)
    clean = awgn(np.arange(4.0), 0.0, RngSeed(1, 0))
    assert np.array_equal(clean, np.arange(4.0))
    with pytest.raises(NonpositiveSigma):
        awgn(x, -1.0, RngSeed(1, 0))


# ---------------------------------------------------------------------------
# decoders
# ---------------------------------------------------------------------------


def test_mmse_decode_fixed_points():
    p = make_params(3.0, 1.0)
    c = np.full(2, 0.25)
    # a y that alpha maps exactly onto a coset point decodes to it
    target = np.array([2.0, -1.0]) - c
    y = target / p.alpha
    out = mmse_decode(Z2, c, p, y)
    assert np.array_equal(out.coeffs, [2, -1])
    assert np.allclose(out.embedding, target, atol=1e-12)


def test_map_matches_exhaustive_posterior():
    p = make_params(1.5, 1.0)
    spec = build_spec(Z2, 1.5, np.full(2, 0.25))
    emb = spec.table_coeffs @ Z2.basis.T - spec.shift
    rng = np.random.default_rng(7)
    ys = list(3.0 * rng.standard_normal((50, 2)))
    ys.append(np.full(2, 40.0))
    ys.append(np.full(2, -40.0))
    for y in ys:
        diff = emb - y
        score = (np.log(spec.table_probs)
                 - np.einsum("ij,ij->i", diff, diff) / (2 * p.sigma ** 2))
        want = spec.table_coeffs[int(np.argmax(score))]
        got = map_decode(spec, p, y)
        assert np.array_equal(got.coeffs, want)


@pytest.mark.parametrize("shift", [0.0, 0.25])
def test_branch_and_bound_matches_table_map(shift):
    p = make_params(0.9, 0.7)
    c = np.full(4, shift)
    table = build_spec(D4, 0.9, c)
    struct = build_spec(D4, 0.9, c, table_cap=1)
    assert struct.backend == "parity"
    rng = np.random.default_rng(13)
    tie_gap = 2.0 * p.sigma_tilde ** 2 * 1e-12
    for y in 1.5 * rng.standard_normal((60, 4)):
        a = map_decode(table, p, y)
        b = map_decode(struct, p, y)
        if not np.array_equal(a.coeffs, b.coeffs):
            da = a.embedding - p.alpha * y
            db = b.embedding - p.alpha * y
            assert abs(float(da @ da) - float(db @ db)) < tie_gap


def test_map_rejects_bad_shape():
    p = make_params(1.5, 1.0)
    spec = build_spec(Z2, 1.5, np.zeros(2))
    with pytest.raises(DimensionMismatch):
        map_decode(spec, p, np.zeros(3))


def test_decode_agreement_small():
    p = make_params(2.0, 1.0)
    rep = decode_agreement(Z2, np.zeros(2), p, 300, RngSeed(21, 0))
    assert rep.trials == 300
    assert rep.agreements + rep.ties == 300
    assert rep.mismatches == 0


def test_decode_agreement_structured():
    p = make_params(1.2, 0.8)
    spec = build_spec(D4, 1.2, np.zeros(4), table_cap=1)
    rep = decode_agreement(D4, np.zeros(4), p, 128, RngSeed(22, 0), spec=spec)
    assert rep.agreements + rep.ties == 128
    assert rep.mismatches == 0


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


def test_wilson_interval():
    p, lo, hi = wilson_interval(50, 1000)
    assert p == 0.05
    assert lo < p < hi
    assert lo == pytest.approx(0.03815, abs=2e-4)
    assert hi == pytest.approx(0.06525, abs=2e-4)
    zp, zlo, zhi = wilson_interval(0, 100)
    assert zp == 0.0 and zlo == pytest.approx(0.0, abs=1e-15) and zhi > 0.0
    op, olo, ohi = wilson_interval(100, 100)
    assert op == 1.0 and ohi == 1.0 and olo < 1.0


def test_simulate_error_clean_channel():
    p = make_params(1.0, 0.01)
    res = simulate_error(Z1, np.zeros(1), p, 4096, RngSeed(31, 0))
    assert res.errors == 0
    assert res.p_hat == 0.0
    assert res.trials == 4096
    with pytest.raises(DimensionMismatch):
        simulate_error(Z1, np.zeros(1), p, 0, RngSeed(31, 0))


def test_simulate_poltyrev_z1_matches_gaussian_escape():
    res = simulate_poltyrev(Z1, 0.25, 200000, RngSeed(2024, 0))
    # escape probability of the unit cell is 2 Q(1/(2*0.25)) = 2 Q(2)
    truth = 2.0 * 0.5 * math.erfc(2.0 / math.sqrt(2.0))
    assert res.ci_low <= truth <= res.ci_high
    assert res.p_hat == pytest.approx(truth, abs=3e-3)
    with pytest.raises(NonpositiveSigma):
        simulate_poltyrev(Z1, 0.0, 100, RngSeed(2024, 0))


def test_poltyrev_factorizes_over_product_lattice():
    s = 0.25
    one = simulate_poltyrev(Z1, s, 1000000, RngSeed(77, 0))
    four = simulate_poltyrev(Z4, s, 400000, RngSeed(78, 0))
    pred = 1.0 - (1.0 - one.p_hat) ** 4
    # propagate the one-dimensional CI through the map p -> 1-(1-p)^4
    lo = 1.0 - (1.0 - one.ci_low) ** 4
    hi = 1.0 - (1.0 - one.ci_high) ** 4
    assert lo <= four.ci_high and hi >= four.ci_low
    assert four.p_hat == pytest.approx(pred, abs=5e-3)


def test_threads_do_not_change_counts():
    p = make_params(1.0, 0.6)
    base = simulate_error(Z2, np.zeros(2), p, 3 * BLOCK + 100, RngSeed(9, 9))
    multi = simulate_error(Z2, np.zeros(2), p, 3 * BLOCK + 100, RngSeed(9, 9),
                           threads=4)
    assert base.errors == multi.errors
    pb = simulate_poltyrev(D4, 0.5, 2 * BLOCK + 7, RngSeed(10, 1))
    pm = simulate_poltyrev(D4, 0.5, 2 * BLOCK + 7, RngSeed(10, 1), threads=3)
    assert pb.errors == pm.errors


def test_sim_result_csv():
    res = simulate_poltyrev(Z1, 0.3, 1000, RngSeed(5, 5), label="poltyrev")
    assert len(CSV_HEADER.split(",")) == 15
    row = res.csv_row().split(",")
    assert len(row) == 15
    assert row[0] == Z1.label
    assert row[1] == "poltyrev"
    assert int(row[9]) == 1000
    assert math.isnan(float(row[3]))  # sigma0 is not a scheme input here
    assert float(row[11]) == res.p_hat


def test_sandwich_small_scale():
    p = make_params(2.0, 1.0)
    res = sandwich_check(Z1, np.zeros(1), p, 3 * BLOCK, RngSeed(404, 0))
    assert res.passed
    assert res.lo <= 1.0 <= res.hi
    assert res.ratio_lo <= res.ratio <= res.ratio_hi
    assert res.scheme.trials == res.poltyrev.trials == 3 * BLOCK
    assert 0.0 <= res.eps1 < 1.0 and 0.0 <= res.eps2 < 1.0


def test_sandwich_insufficient_errors():
    p = make_params(1.0, 0.05)
    with pytest.raises(InsufficientErrors):
        sandwich_check(Z1, np.zeros(1), p, 2048, RngSeed(1, 0))


def test_sandwich_flatness_guard():
    p = make_params(0.15, 0.05)
    with pytest.raises(FlatnessTooLarge):
        sandwich_check(Z1, np.zeros(1), p, 2048, RngSeed(1, 0))


# ---------------------------------------------------------------------------
# exponent
# ---------------------------------------------------------------------------


def test_exponent_values():
    assert poltyrev_exponent(1.0).exponent == 0.0
    assert poltyrev_exponent(8.0).exponent == pytest.approx(1.0, rel=1e-15)
    assert poltyrev_exponent(8.0, n=8).bound == pytest.approx(
        math.exp(-8.0), rel=1e-12)
    e2 = poltyrev_exponent(2.0).exponent
    assert e2 == pytest.approx(0.5 * (1.0 - math.log(2.0)), rel=1e-15)
    with pytest.raises(MuBelowOne):
        poltyrev_exponent(0.999)


def test_exponent_branch_continuity():
    # evaluate both closed forms exactly at the branch points
    at2_low = 0.5 * ((2.0 - 1.0) - math.log(2.0))
    at2_high = 0.5 * math.log(math.e * 2.0 / 4.0)
    assert abs(at2_low - at2_high) < 1e-12
    at4_low = 0.5 * math.log(math.e * 4.0 / 4.0)
    at4_high = 4.0 / 8.0
    assert abs(at4_low - at4_high) < 1e-12
    assert poltyrev_exponent(2.0).exponent == pytest.approx(at2_low, abs=1e-15)
    assert poltyrev_exponent(4.0).exponent == pytest.approx(0.5, abs=1e-15)


def test_exponent_monotone():
    mus = np.linspace(1.0, 12.0, 111)
    es = [poltyrev_exponent(float(m)).exponent for m in mus]
    assert all(b > a for a, b in zip(es, es[1:]))
    bounds = [poltyrev_exponent(float(m), n=4).bound for m in mus]
    assert all(b < a for a, b in zip(bounds, bounds[1:]))
    for m, e, b in zip(mus, es, bounds):
        assert b == pytest.approx(math.exp(-4.0 * e), rel=1e-12)


def test_vnr_values_and_invariance():
    assert vnr(Z1, 0.1) == pytest.approx(5.854983152431917, rel=1e-12)
    assert vnr(Z2.scale(3.0), 3.0 * 0.4) == pytest.approx(
        vnr(Z2, 0.4), rel=1e-12)


def test_design_volume():
    assert design_volume(math.sqrt(0.8), 0.0, 2) == pytest.approx(
        13.663574756277704, rel=1e-12)
    # scaling any lattice to the designed volume lands the VNR at 1+eps''
    v = design_volume(0.7, 0.25, 2)
    lat = Z2.scale(math.sqrt(v))
    assert vnr(lat, 0.7) == pytest.approx(1.25, rel=1e-12)
    with pytest.raises(NonpositiveSigma):
        design_volume(0.0, 0.1, 2)
    with pytest.raises(DimensionMismatch):
        design_volume(1.0, -0.1, 2)


# ---------------------------------------------------------------------------
# design conditions
# ---------------------------------------------------------------------------


def test_conditions_at_design_point():
    p = make_params(math.sqrt(10.0), 1.0)
    v = design_volume(p.sigma_tilde, 0.1, 1)
    rep = check_conditions(Z1.scale(v), p)
    assert rep.volume_ok and rep.snr_ok
    assert rep.volume_margin > 0 and rep.snr_margin > 0


def test_feasible_interval_matches_snr_condition():
    # scanning the SNR shows the window opens exactly past sigma0^2 = e sigma^2
    for ratio in np.linspace(1.0, 10.0, 19):
        p = make_params(math.sqrt(ratio), 1.0)
        lo, hi = feasible_volume_interval(p)
        assert (lo < hi) == (ratio > math.e)
    p = make_params(math.sqrt(10.0), 1.0)
    lo, hi = feasible_volume_interval(p)
    assert lo == pytest.approx(2 * math.pi * math.e * 10.0 / 11.0, rel=1e-12)
    assert hi == pytest.approx(2 * math.pi * 100.0 / 11.0, rel=1e-12)
    # any volume inside the window satisfies (i) and (ii) together on Z8
    v2n = 0.5 * (lo + hi)
    rep = check_conditions(Z8.scale(math.sqrt(v2n)), p)
    assert rep.volume_ok and rep.smoothing_ok and rep.snr_ok


# ---------------------------------------------------------------------------
# rate budget
# ---------------------------------------------------------------------------


def test_rate_formula_values():
    assert rate_lower_formula(8, 10.0, 0.0, 0.0) == pytest.approx(
        1.1989476363991853, rel=1e-12)
    assert rate_lower_formula(8, 10.0, 0.5, 0.1) == pytest.approx(
        0.27690607543174384, rel=1e-12)
    ep = eps_prime_formula(8, 0.5)
    assert ep == pytest.approx(-math.log(0.5) / 8 + math.pi * 0.5 / 4.0,
                               rel=1e-12)
    assert eps_prime_formula(8, 0.0) == 0.0
    with pytest.raises(FlatnessTooLarge):
        eps_prime_formula(8, 1.0)
    with pytest.raises(FlatnessTooLarge):
        rate_lower_formula(8, 10.0, 1.0, 0.0)


def test_rate_monotone_in_snr():
    rates = [rate_lower_formula(8, s, 0.2, 0.05) for s in np.linspace(1, 30, 30)]
    assert all(b > a for a, b in zip(rates, rates[1:]))


def test_rate_approaches_capacity():
    cap = 0.5 * math.log1p(10.0)
    gaps = [cap - rate_lower_formula(8, 10.0, e, e)
            for e in (0.2, 0.1, 0.05, 0.01, 0.001)]
    assert all(g > 0 for g in gaps)
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 2e-3


def test_rate_budget_on_z8():
    rb = rate_budget(Z8, make_params(3.0, 1.0), 0.05)
    assert rb.n == 8
    assert rb.eps < 1e-15
    assert rb.eps_prime < 1e-15
    assert rb.rate_lower == pytest.approx(0.5 * math.log(10.0) - 0.025,
                                          rel=1e-12)
    d = rb.as_dict()
    assert set(d) == {"n", "eps", "eps_prime", "eps_dprime", "rate_lower"}
    with pytest.raises(FlatnessTooLarge):
        rate_budget(Z8, make_params(0.3, 0.1), 0.05)


# ---------------------------------------------------------------------------
# power accounting
# ---------------------------------------------------------------------------


def test_power_stats_z8():
    spec = build_spec(Z8, 3.0, np.zeros(8))
    ps = power_stats(spec)
    assert ps.avg_power_per_dim == pytest.approx(9.0, rel=1e-9)
    assert ps.sphere_radius == pytest.approx(21.269446210866192, rel=1e-12)
    assert ps.peak_norm_sq <= spec.truncation_radius ** 2 * (1 + 1e-12)


def test_mmse_gap_near_zero():
    spec = build_spec(Z8, 3.0, np.zeros(8))
    assert mmse_gap(spec, make_params(3.0, 1.0)) < 1e-12
    # at small sigma0 the discrete power deviates from sigma0^2 and the
    # gap becomes visible
    narrow = build_spec(Z1, 0.4, np.zeros(1))
    assert mmse_gap(narrow, make_params(0.4, 1.0)) > 1e-4
