"""Monte Carlo oracle suite: sampled statistics against the closed forms.

Each check draws fresh samples and compares an empirical statistic with the
corresponding exact formula or bound, passing when the discrepancy stays
within three standard errors (checks over many random instances allow a 1%
miss rate, which is what a 3-sigma rule predicts).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analysis import subgamma_tail, subgaussian_tail
from .latency import WorkerPool, expected_max, kth_order_response, variance_of_max


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def mc_max_samples(rates, samples: int, rng: np.random.Generator) -> np.ndarray:
    """``samples`` draws of the maximum of independent exponentials.

    Accumulates one rate at a time so memory stays at O(samples).
    """
    rates = np.atleast_1d(np.asarray(rates, dtype=np.float64))
    acc = rng.standard_exponential(samples)
    acc /= rates[0]
    for lam in rates[1:]:
        nxt = rng.standard_exponential(samples)
        nxt /= lam
        np.maximum(acc, nxt, out=acc)
    return acc


def mc_max_mean(rates, samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """(Monte Carlo mean, its standard error)."""
    draws = mc_max_samples(rates, samples, rng)
    return float(draws.mean()), float(draws.std(ddof=1) / math.sqrt(samples))


def mc_max_variance(rates, samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """(Monte Carlo variance, its standard error via the fourth moment)."""
    draws = mc_max_samples(rates, samples, rng)
    centered_sq = (draws - draws.mean()) ** 2
    return float(centered_sq.mean()), float(centered_sq.std(ddof=1) / math.sqrt(samples))


def check_expected_max(lists: int, samples: int, rng: np.random.Generator) -> CheckResult:
    misses = 0
    for _ in range(lists):
        length = int(rng.integers(1, 9))
        rates = rng.uniform(0.5, 10.0, length)
        mean, se = mc_max_mean(rates, samples, rng)
        if abs(expected_max(rates) - mean) > 3.0 * se:
            misses += 1
    allowed = max(1, math.ceil(0.01 * lists))
    return CheckResult(
        "expected_max vs Monte Carlo",
        misses <= allowed,
        f"{misses}/{lists} outside 3 standard errors (allowed {allowed})",
    )


def check_variance_of_max(lists: int, samples: int, rng: np.random.Generator) -> CheckResult:
    misses = 0
    for _ in range(lists):
        length = int(rng.integers(1, 9))
        rates = rng.uniform(0.5, 10.0, length)
        var, se = mc_max_variance(rates, samples, rng)
        if abs(variance_of_max(rates) - var) > 3.0 * se:
            misses += 1
    allowed = max(1, math.ceil(0.01 * lists))
    return CheckResult(
        "variance_of_max vs Monte Carlo",
        misses <= allowed,
        f"{misses}/{lists} outside 3 standard errors (allowed {allowed})",
    )


def check_order_statistics(samples: int, rng: np.random.Generator) -> CheckResult:
    """Sampled k-th order statistics against closed forms for iid pools."""
    n = 4
    pool = WorkerPool(np.ones(n))
    fastest = np.array([kth_order_response(pool, 1, rng) for _ in range(samples)])
    slowest = np.array([kth_order_response(pool, n, rng) for _ in range(samples)])
    ok = True
    details = []
    exp_min = 1.0 / n
    se = fastest.std(ddof=1) / math.sqrt(samples)
    if abs(fastest.mean() - exp_min) > 3 * se:
        ok = False
    details.append(f"min mean {fastest.mean():.5f} vs {exp_min:.5f}")
    exp_max = expected_max(pool.rates)
    se = slowest.std(ddof=1) / math.sqrt(samples)
    if abs(slowest.mean() - exp_max) > 3 * se:
        ok = False
    details.append(f"max mean {slowest.mean():.5f} vs {exp_max:.5f}")
    return CheckResult("kth_order_response vs closed forms", ok, "; ".join(details))


def empirical_mean_tail_rates(
    t: int, lam: float, eps_grid, trials: int, rng: np.random.Generator
) -> dict:
    """Observed tail frequencies of the centered mean of ``t`` iid exponentials.

    The centered mean sits in the sub-gamma class (variance 1/(t lam^2), scale
    1/(t lam)) on the right and the sub-Gaussian class (same variance) on the
    left, so each observed frequency should respect the matching bound.
    """
    draws = rng.standard_exponential((trials, t)).mean(axis=1) / lam
    centered = draws - 1.0 / lam
    sigma2 = 1.0 / (t * lam * lam)
    scale = 1.0 / (t * lam)
    out = {}
    for eps in eps_grid:
        threshold, right_bound = subgamma_tail(eps, sigma2, scale)
        left_bound = subgaussian_tail(eps, sigma2)
        out[eps] = {
            "right_freq": float((centered > threshold).mean()),
            "right_bound": right_bound,
            "left_freq": float((centered <= -eps).mean()),
            "left_bound": left_bound,
        }
    return out


def check_tail_bounds(trials: int, rng: np.random.Generator) -> CheckResult:
    worst = 0.0
    ok = True
    for t in (4, 16, 64):
        for lam in (1.0, 2.0):
            rates = empirical_mean_tail_rates(t, lam, (0.25, 0.5, 1.0, 2.0), trials, rng)
            for eps, row in rates.items():
                for side in ("right", "left"):
                    bound = row[f"{side}_bound"]
                    margin = 3.0 * math.sqrt(max(bound * (1 - bound), 1e-12) / trials)
                    excess = row[f"{side}_freq"] - (bound + margin)
                    worst = max(worst, excess)
                    if excess > 0:
                        ok = False
    return CheckResult("sub-gamma / sub-Gaussian tail bounds", ok, f"worst excess {worst:.2e}")


def oracle_suite(lists: int, samples: int, trials: int, seed: int) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [
        check_expected_max(lists, samples, rng),
        check_variance_of_max(max(lists // 2, 5), samples, rng),
        check_order_statistics(min(samples, 200_000) // 20, rng),
        check_tail_bounds(trials, rng),
    ]
