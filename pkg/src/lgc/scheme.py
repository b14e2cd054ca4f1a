"""Power-constrained AWGN coding with lattice Gaussian signaling.

The transmitter draws x from a discrete Gaussian over L - c; the channel
adds white noise of deviation sigma per dimension.  Completing the square
in the posterior

    P(x|y) ~ exp(-|y-x|^2/(2 sigma^2) - |x|^2/(2 sigma0^2))

shows the MAP word is the support point nearest to alpha*y with the MMSE
coefficient alpha = sigma0^2/(sigma0^2+sigma^2), i.e. scaled lattice
decoding at effective noise sigma_tilde = sigma0*sigma/sqrt(sigma0^2 +
sigma^2).  The Monte Carlo harness verifies this equivalence trial by
trial and brackets the scheme's error rate between flatness-factor
multiples of the plain Voronoi-escape rate at sigma_tilde.

Simulation trials are sharded into fixed blocks of 2^14; block b always
draws from RNG lanes 2b (signal) and 2b+1 (noise), so results depend only
on (seed, trials), never on thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    DimensionMismatch,
    FlatnessTooLarge,
    InsufficientErrors,
    MuBelowOne,
    NonpositiveSigma,
)
from .analytics import flatness, gsnr
from .lattice import (
    DEFAULT_NODE_CAP,
    Lattice,
    LatticePoint,
    _enum_nearest,
    closest_point,
    closest_points_batch,
)
from .rng import RngSeed, stream
from .sampler import (
    DiscreteGaussianSpec,
    build_spec,
    sample_coeffs,
    support_moment,
    support_peak,
)

Z95 = 1.959963984540054
BLOCK = 1 << 14
CSV_HEADER = ("lattice,label,n,sigma0,sigma,alpha,sigma_tilde,V,mu,"
              "trials,errors,p_hat,ci_low,ci_high,seed")


# ---------------------------------------------------------------------------
# parameters and channel
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianParams:
    """Signaling/noise deviations and the derived MMSE quantities."""

    sigma0: float
    sigma: float
    alpha: float
    sigma_tilde: float
    snr: float
    power: float

    def as_dict(self) -> dict:
        return {"sigma0": self.sigma0, "sigma": self.sigma,
                "alpha": self.alpha, "sigma_tilde": self.sigma_tilde,
                "snr": self.snr, "power": self.power}


def make_params(sigma0: float, sigma: float) -> GaussianParams:
    if sigma0 <= 0 or sigma <= 0:
        raise NonpositiveSigma(
            f"deviations must be positive, got sigma0={sigma0} sigma={sigma}")
    s0sq = sigma0 * sigma0
    ssq = sigma * sigma
    alpha = s0sq / (s0sq + ssq)
    return GaussianParams(
        sigma0=sigma0, sigma=sigma, alpha=alpha,
        sigma_tilde=sigma0 * sigma / math.sqrt(s0sq + ssq),
        snr=s0sq / ssq, power=s0sq)


def awgn(x, sigma: float, seed: RngSeed):
    """x plus i.i.d. zero-mean Gaussian noise of deviation sigma."""
    if sigma < 0:
        raise NonpositiveSigma(f"noise deviation must be >= 0, got {sigma}")
    x = np.asarray(x, dtype=float)
    if sigma == 0.0:
        return x.copy()
    return x + sigma * stream(seed).standard_normal(x.shape)


# ---------------------------------------------------------------------------
# decoders
# ---------------------------------------------------------------------------


def mmse_decode(lat: Lattice, c, params: GaussianParams, y,
                node_cap: int = DEFAULT_NODE_CAP) -> LatticePoint:
    """Scaled lattice decoding: nearest point of L - c to alpha*y."""
    y = np.asarray(y, dtype=float)
    c = np.asarray(c, dtype=float)
    pt = closest_point(lat, params.alpha * y + c, node_cap)
    return LatticePoint(pt.coeffs, pt.embedding - c)


def map_decode(spec: DiscreteGaussianSpec, params: GaussianParams, y,
               node_cap: int = DEFAULT_NODE_CAP) -> LatticePoint:
    """Exact posterior argmax over the truncated signaling support.

    Table specs score every support point exhaustively.  Structured specs
    run branch-and-bound enumeration toward c + alpha*y (the posterior in
    completed-square form) with leaves restricted to the truncation ball;
    a feasible incumbent from plain scaled decoding keeps the search tight.
    Ties (posterior metric within ~1e-12 relative) break to the
    lexicographically smallest coefficient vector.
    """
    y = np.asarray(y, dtype=float)
    lat = spec.lattice
    if y.shape != (lat.n,):
        raise DimensionMismatch(f"y has shape {y.shape}, lattice dim {lat.n}")
    c = spec.shift
    if spec.backend == "table":
        return _map_table(spec, params, y)
    target = c + params.alpha * y
    q, r = lat.qr()
    diag, cols = lat._dfs_tabs()
    t = tuple(float(v) for v in (target @ q))
    basis = lat.basis
    rad = spec.truncation_radius + 1e-9

    def feasible(u):
        x = basis @ np.asarray(u, dtype=float) - c
        return float(x @ x) <= rad * rad

    init = None
    for cand in (closest_point(lat, target, node_cap),
                 closest_point(lat, c, node_cap)):
        u = tuple(int(v) for v in cand.coeffs)
        if feasible(u):
            d = basis @ np.asarray(u, dtype=float) - target
            init = (u, float(d @ d))
            break
    ties, _, _ = _enum_nearest(diag, cols, t, node_cap, init=init,
                               feasible=feasible)
    coeffs = np.array(ties[0][0], dtype=np.int64)
    return LatticePoint(coeffs, basis @ coeffs.astype(float) - c)


def _map_table(spec, params, y):
    lat = spec.lattice
    c = spec.shift
    two_ssq = 2.0 * params.sigma * params.sigma
    logp = np.log(spec.table_probs)
    best = -math.inf
    best_idx = -1
    m = spec.table_coeffs.shape[0]
    for lo in range(0, m, 262144):
        emb = spec.table_coeffs[lo:lo + 262144] @ lat.basis.T - c
        diff = emb - y
        score = logp[lo:lo + 262144] - np.einsum("ij,ij->i", diff, diff) / two_ssq
        j = int(np.argmax(score))
        if score[j] > best:
            best = float(score[j])
            best_idx = lo + j
    # gather ties in a second pass and keep the lexicographically first
    band = 1e-12 * (1.0 + abs(best))
    pick = best_idx
    for lo in range(0, m, 262144):
        emb = spec.table_coeffs[lo:lo + 262144] @ lat.basis.T - c
        diff = emb - y
        score = logp[lo:lo + 262144] - np.einsum("ij,ij->i", diff, diff) / two_ssq
        for j in np.nonzero(score >= best - band)[0]:
            if lo + j < pick:
                pick = lo + int(j)
    coeffs = spec.table_coeffs[pick].astype(np.int64)
    return LatticePoint(coeffs, lat.basis @ coeffs.astype(float) - c)


class AgreementReport(NamedTuple):
    trials: int
    agreements: int
    ties: int
    mismatches: int


def decode_agreement(lat: Lattice, c, params: GaussianParams, trials: int,
                     seed: RngSeed,
                     spec: DiscreteGaussianSpec | None = None) -> AgreementReport:
    """Trial-by-trial comparison of map_decode and mmse_decode.

    Draws x from the signaling distribution and y through the channel,
    then decodes both ways.  Exact posterior ties are counted separately
    and excluded from the agreement tally.
    """
    c = np.asarray(c, dtype=float)
    if spec is None:
        spec = build_spec(lat, params.sigma0, c)
    rng_x = stream(seed, 0)
    rng_w = stream(seed, 1)
    tie_gap = 2.0 * params.sigma_tilde ** 2 * 1e-12
    agreements = ties = mismatches = 0
    for lo in range(0, trials, BLOCK):
        m = min(BLOCK, trials - lo)
        U = sample_coeffs(spec, rng_x, m)
        X = U @ lat.basis.T - c
        Y = X + params.sigma * rng_w.standard_normal((m, lat.n))
        for i in range(m):
            a = map_decode(spec, params, Y[i])
            b = mmse_decode(lat, c, params, Y[i])
            if np.array_equal(a.coeffs, b.coeffs):
                agreements += 1
                continue
            da = a.embedding - params.alpha * Y[i]
            db = b.embedding - params.alpha * Y[i]
            if abs(float(da @ da) - float(db @ db)) < tie_gap:
                ties += 1
            else:
                mismatches += 1
    return AgreementReport(trials, agreements, ties, mismatches)


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


def wilson_interval(errors: int, trials: int) -> tuple:
    """(p_hat, ci_low, ci_high): 95% Wilson score interval."""
    p = errors / trials
    z2 = Z95 * Z95
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2 * trials)) / denom
    half = Z95 * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    return p, max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class SimResult:
    """One Monte Carlo estimate with its Wilson interval and provenance."""

    lattice_label: str
    run_label: str
    n: int
    sigma0: float
    sigma: float
    alpha: float
    sigma_tilde: float
    volume: float
    mu: float
    trials: int
    errors: int
    p_hat: float
    ci_low: float
    ci_high: float
    seed_tag: str

    def csv_row(self) -> str:
        vals = [self.lattice_label, self.run_label, str(self.n),
                repr(self.sigma0), repr(self.sigma), repr(self.alpha),
                repr(self.sigma_tilde), repr(self.volume), repr(self.mu),
                str(self.trials), str(self.errors), repr(self.p_hat),
                repr(self.ci_low), repr(self.ci_high), self.seed_tag]
        return ",".join(vals)


def _block_plan(trials: int):
    out = []
    b = 0
    done = 0
    while done < trials:
        m = min(BLOCK, trials - done)
        out.append((b, m))
        b += 1
        done += m
    return out


def _run_blocks(fn, plan, threads: int) -> int:
    if threads <= 1:
        return sum(fn(b, m) for b, m in plan)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return sum(pool.map(lambda bm: fn(*bm), plan))


def simulate_error(lat: Lattice, c, params: GaussianParams, trials: int,
                   seed: RngSeed, threads: int = 1, label: str = "",
                   spec: DiscreteGaussianSpec | None = None) -> SimResult:
    """Scheme error rate: x ~ D_{L-c}, y = x + noise, decode by MMSE scaling."""
    if trials < 1:
        raise DimensionMismatch(f"trials must be >= 1, got {trials}")
    c = np.asarray(c, dtype=float)
    if spec is None:
        spec = build_spec(lat, params.sigma0, c)
    lat.qr()
    lat._dfs_tabs()
    basis_t = lat.basis.T.copy()

    def run(b: int, m: int) -> int:
        rng_x = stream(seed, 2 * b)
        rng_w = stream(seed, 2 * b + 1)
        U = sample_coeffs(spec, rng_x, m)
        Y = U @ basis_t - c + params.sigma * rng_w.standard_normal((m, lat.n))
        dec = closest_points_batch(lat, params.alpha * Y + c)
        return int(np.sum(np.any(dec != U, axis=1)))

    errors = _run_blocks(run, _block_plan(trials), threads)
    p, lo, hi = wilson_interval(errors, trials)
    return SimResult(lat.label, label, lat.n, params.sigma0, params.sigma,
                     params.alpha, params.sigma_tilde, lat.volume,
                     vnr(lat, params.sigma_tilde), trials, errors, p, lo, hi,
                     seed.tag())


def simulate_poltyrev(lat: Lattice, noise_sigma: float, trials: int,
                      seed: RngSeed, threads: int = 1,
                      label: str = "") -> SimResult:
    """Voronoi-escape rate of plain nearest-point decoding around zero."""
    if noise_sigma <= 0:
        raise NonpositiveSigma(f"noise deviation must be positive, got {noise_sigma}")
    if trials < 1:
        raise DimensionMismatch(f"trials must be >= 1, got {trials}")
    lat.qr()
    lat._dfs_tabs()

    def run(b: int, m: int) -> int:
        rng_w = stream(seed, 2 * b + 1)
        W = noise_sigma * rng_w.standard_normal((m, lat.n))
        dec = closest_points_batch(lat, W)
        return int(np.sum(np.any(dec != 0, axis=1)))

    errors = _run_blocks(run, _block_plan(trials), threads)
    p, lo, hi = wilson_interval(errors, trials)
    return SimResult(lat.label, label, lat.n, math.nan, noise_sigma, math.nan,
                     noise_sigma, lat.volume, vnr(lat, noise_sigma), trials,
                     errors, p, lo, hi, seed.tag())


class SandwichResult(NamedTuple):
    ratio: float
    lo: float
    hi: float
    passed: bool
    ratio_lo: float
    ratio_hi: float
    eps1: float
    eps2: float
    scheme: SimResult
    poltyrev: SimResult


def sandwich_check(lat: Lattice, c, params: GaussianParams, trials: int,
                   seed: RngSeed, threads: int = 1) -> SandwichResult:
    """Paired test of the error-probability sandwich at effective noise.

    Both arms reuse the same noise lanes (common random numbers).  The
    bracket comes from the flatness factors at sigma0^2/sqrt(sigma0^2 +
    sigma^2) and at sigma0; the test passes when the ratio's CI-inflated
    interval intersects the bracket.
    """
    s0, s = params.sigma0, params.sigma
    sigma1 = s0 * s0 / math.sqrt(s0 * s0 + s * s)
    eps1 = flatness(lat, sigma1).epsilon
    eps2 = flatness(lat, s0).epsilon
    if eps1 >= 1.0 or eps2 >= 1.0:
        raise FlatnessTooLarge(
            f"flatness factors ({eps1:.3g}, {eps2:.3g}) must be < 1")
    lo = (1.0 - eps1) / (1.0 + eps2)
    hi = (1.0 + eps1) / (1.0 - eps2)
    res_s = simulate_error(lat, c, params, trials, seed, threads,
                           label="scheme")
    res_p = simulate_poltyrev(lat, params.sigma_tilde, trials, seed, threads,
                              label="poltyrev")
    if res_s.errors < 50 or res_p.errors < 50:
        raise InsufficientErrors(
            f"need >= 50 errors per arm, got {res_s.errors} and {res_p.errors}")
    ratio = res_s.p_hat / res_p.p_hat
    ratio_lo = res_s.ci_low / res_p.ci_high
    ratio_hi = res_s.ci_high / res_p.ci_low
    passed = ratio_lo <= hi and ratio_hi >= lo
    return SandwichResult(ratio, lo, hi, passed, ratio_lo, ratio_hi,
                          eps1, eps2, res_s, res_p)


# ---------------------------------------------------------------------------
# exponent, conditions, rate
# ---------------------------------------------------------------------------


class PoltyrevPoint(NamedTuple):
    mu: float
    exponent: float
    bound: float


def poltyrev_exponent(mu: float, n: int = 1) -> PoltyrevPoint:
    """Piecewise error exponent of unconstrained lattice decoding."""
    if mu < 1.0:
        raise MuBelowOne(f"exponent defined for mu >= 1, got {mu}")
    if mu <= 2.0:
        e = 0.5 * ((mu - 1.0) - math.log(mu))
    elif mu <= 4.0:
        e = 0.5 * math.log(math.e * mu / 4.0)
    else:
        e = mu / 8.0
    return PoltyrevPoint(mu, e, math.exp(-n * e))


def vnr(lat: Lattice, sigma_tilde: float) -> float:
    """Volume-to-noise ratio gsnr/e; mu > 1 is the achievability region."""
    return gsnr(lat, sigma_tilde) / math.e


def design_volume(sigma_tilde: float, eps_dprime: float, n: int) -> float:
    """Codebook volume putting the VNR at 1 + eps_dprime."""
    if sigma_tilde <= 0:
        raise NonpositiveSigma(f"sigma_tilde must be positive, got {sigma_tilde}")
    if eps_dprime < 0 or n < 1:
        raise DimensionMismatch(
            f"need eps_dprime >= 0 and n >= 1, got {eps_dprime}, {n}")
    return (2.0 * math.pi * math.e * sigma_tilde ** 2
            * (1.0 + eps_dprime)) ** (n / 2.0)


class ConditionsReport(NamedTuple):
    volume_ok: bool
    volume_margin: float
    smoothing_ok: bool
    smoothing_margin: float
    snr_ok: bool
    snr_margin: float


def feasible_volume_interval(params: GaussianParams) -> tuple:
    """(lo, hi) for V^{2/n}: above the VNR floor, below the smoothing cap.

    Nonempty exactly when sigma0^2 > e sigma^2.
    """
    s0sq = params.sigma0 ** 2
    ssq = params.sigma ** 2
    lo = 2.0 * math.pi * math.e * params.sigma_tilde ** 2
    hi = 2.0 * math.pi * s0sq * s0sq / (s0sq + ssq)
    return lo, hi


def check_conditions(lat: Lattice, params: GaussianParams) -> ConditionsReport:
    """The three design conditions with their numeric margins.

    (i) V^{2/n} clears 2 pi e sigma_tilde^2; (ii) the GSNR at deviation
    sigma0^2/sqrt(sigma0^2+sigma^2) is below 1 (smoothing regime); (iii)
    sigma0^2 > e sigma^2, which is what makes (i) and (ii) compatible.
    """
    v2n = lat.volume ** (2.0 / lat.n)
    floor = 2.0 * math.pi * math.e * params.sigma_tilde ** 2
    s0, s = params.sigma0, params.sigma
    sigma1 = s0 * s0 / math.sqrt(s0 * s0 + s * s)
    g1 = gsnr(lat, sigma1)
    return ConditionsReport(
        volume_ok=v2n > floor, volume_margin=v2n - floor,
        smoothing_ok=g1 < 1.0, smoothing_margin=1.0 - g1,
        snr_ok=s0 * s0 > math.e * s * s,
        snr_margin=s0 * s0 - math.e * s * s)


@dataclass(frozen=True)
class RateBudget:
    n: int
    eps: float
    eps_prime: float
    eps_dprime: float
    rate_lower: float

    def as_dict(self) -> dict:
        return {"n": self.n, "eps": self.eps, "eps_prime": self.eps_prime,
                "eps_dprime": self.eps_dprime, "rate_lower": self.rate_lower}


def eps_prime_formula(n: int, eps: float) -> float:
    """Entropy-rate slack from a flatness factor eps at sigma0/2."""
    if eps >= 1.0:
        raise FlatnessTooLarge(f"flatness factor {eps:.3g} >= 1")
    if eps == 0.0:
        return 0.0
    return -math.log(1.0 - eps) / n + math.pi * eps / (n * (1.0 - eps))


def rate_lower_formula(n: int, snr: float, eps: float,
                       eps_dprime: float) -> float:
    """Achievable-rate lower bound in nats per dimension."""
    if eps >= 1.0:
        raise FlatnessTooLarge(f"flatness factor {eps:.3g} >= 1")
    slack = math.pi * eps / (n * (1.0 - eps)) if eps else 0.0
    return (0.5 * math.log1p(snr) - slack - 0.5 * eps_dprime
            - eps_prime_formula(n, eps))


def rate_budget(lat: Lattice, params: GaussianParams,
                eps_dprime: float) -> RateBudget:
    """Rate guarantee of the scheme on this lattice at these parameters."""
    eps = flatness(lat, params.sigma0 / 2.0).epsilon
    if eps >= 1.0:
        raise FlatnessTooLarge(
            f"flatness factor at sigma0/2 is {eps:.3g} >= 1")
    return RateBudget(
        n=lat.n, eps=eps, eps_prime=eps_prime_formula(lat.n, eps),
        eps_dprime=eps_dprime,
        rate_lower=rate_lower_formula(lat.n, params.snr, eps, eps_dprime))


# ---------------------------------------------------------------------------
# power accounting
# ---------------------------------------------------------------------------


class PowerStats(NamedTuple):
    avg_power_per_dim: float
    peak_norm_sq: float
    sphere_radius: float


def power_stats(spec: DiscreteGaussianSpec) -> PowerStats:
    """Exact power accounting over the truncated signaling support.

    sphere_radius = sqrt(2 pi n) sigma0 bounds the sent points; its peak
    power exceeds that of a same-volume Voronoi constellation by a factor
    of about 2 pi, the price paid for spherical shaping.
    """
    n = spec.lattice.n
    return PowerStats(
        avg_power_per_dim=support_moment(spec) / n,
        peak_norm_sq=support_peak(spec),
        sphere_radius=math.sqrt(2.0 * math.pi * n) * spec.sigma0)


def mmse_gap(spec: DiscreteGaussianSpec, params: GaussianParams) -> float:
    """|alpha - P/(P+sigma^2)| with P the exact per-dimension power."""
    p = support_moment(spec) / spec.lattice.n
    return abs(params.alpha - p / (p + params.sigma ** 2))
