"""Distribution helpers shared by the simulator and the analytic model.

Negative-binomial laws (total trials until ``n`` successes), the standard
normal machinery, moments of the maximum/minimum of two independent normals,
the two-receiver broadcast efficiency and upper-truncated normal moments.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.stats import nbinom

__all__ = [
    "DomainError",
    "NormalMoments",
    "TruncatedMoments",
    "neg_binomial_pmf",
    "nb_normal_approx",
    "std_normal_pdf",
    "std_normal_cdf",
    "std_normal_sf",
    "std_normal_quantile",
    "max_of_normals_moments",
    "min_of_normals_mean",
    "broadcast_efficiency_2",
    "broadcast_second_moment_2",
    "truncate_upper",
    "truncated_pdf_cdf",
    "nb_total_pmf_table",
    "tail_horizon",
]

# Remaining probability mass below which infinite sums are cut.
TAIL_MASS = 1e-12


class DomainError(ValueError):
    """Argument outside the domain where the quantity is finite/defined."""


@dataclass(frozen=True)
class NormalMoments:
    mean: float
    std_dev: float

    def __post_init__(self):
        if not math.isfinite(self.mean):
            raise DomainError(f"mean must be finite, got {self.mean}")
        if not self.std_dev >= 0:
            raise DomainError(f"std_dev must be >= 0, got {self.std_dev}")

    @property
    def var(self) -> float:
        return self.std_dev**2

    @classmethod
    def from_var(cls, mean, var):
        # tiny negative variances come from cancellation
        return cls(float(mean), math.sqrt(max(float(var), 0.0)))

    def __add__(self, other):
        """Sum of independent normals."""
        return NormalMoments.from_var(self.mean + other.mean, self.var + other.var)


@dataclass(frozen=True)
class TruncatedMoments:
    """Moments of a normal law conditioned on ``X <= cap``."""

    mean: float
    std_dev: float
    cap: float
    source: NormalMoments


def _check_prob(p, name="fail_prob", allow_one=False):
    if not 0.0 <= p <= 1.0 or (p == 1.0 and not allow_one):
        raise DomainError(f"{name} must be in [0, 1), got {p}")


def neg_binomial_pmf(total_trials: int, successes: int, fail_prob: float) -> float:
    """P{B = total_trials} where B counts trials until ``successes`` successes."""
    _check_prob(fail_prob)
    if successes < 1:
        raise DomainError(f"successes must be >= 1, got {successes}")
    if total_trials < successes:
        raise DomainError(
            f"total_trials ({total_trials}) must be >= successes ({successes})"
        )
    failures = total_trials - successes
    if fail_prob == 0.0:
        return 1.0 if failures == 0 else 0.0
    return float(
        math.comb(total_trials - 1, successes - 1)
        * fail_prob**failures
        * (1.0 - fail_prob) ** successes
    )


def nb_normal_approx(successes: float, fail_prob: float) -> NormalMoments:
    """Normal law with the mean and spread of NB(., successes, fail_prob).

    ``successes`` may be fractional: the analytic model plugs in mean packet
    counts.
    """
    _check_prob(fail_prob)
    if successes < 0:
        raise DomainError(f"successes must be >= 0, got {successes}")
    return NormalMoments(
        successes / (1.0 - fail_prob),
        math.sqrt(successes * fail_prob) / (1.0 - fail_prob),
    )


def std_normal_pdf(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def std_normal_cdf(x):
    return special.ndtr(x)


def std_normal_sf(x):
    """Gaussian Q-function, 1 - cdf(x), without cancellation in the upper tail."""
    return special.ndtr(-np.asarray(x, dtype=float))


def std_normal_quantile(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile needs p in (0, 1), got {p}")
    x = float(special.ndtri(p))
    # one Newton step on the cdf; ndtri alone is already close to 1 ulp
    dens = float(std_normal_pdf(x))
    if dens > 0.0:
        x -= (float(special.ndtr(x)) - p) / dens
    return x


def _theta(a: NormalMoments, b: NormalMoments) -> float:
    return math.hypot(a.std_dev, b.std_dev)


def max_of_normals_moments(a: NormalMoments, b: NormalMoments) -> NormalMoments:
    """Normal fit to max(A, B) for independent normal A, B (Clark's moments)."""
    theta = _theta(a, b)
    if theta == 0.0:
        return NormalMoments(max(a.mean, b.mean), 0.0)
    alpha = (a.mean - b.mean) / theta
    cdf_a, cdf_b = special.ndtr(alpha), special.ndtr(-alpha)
    dens = float(std_normal_pdf(alpha))
    mean = a.mean * cdf_a + b.mean * cdf_b + theta * dens
    second = (
        (a.var + a.mean**2) * cdf_a
        + (b.var + b.mean**2) * cdf_b
        + (a.mean + b.mean) * theta * dens
    )
    return NormalMoments.from_var(mean, second - mean**2)


def min_of_normals_mean(a: NormalMoments, b: NormalMoments) -> float:
    theta = _theta(a, b)
    if theta == 0.0:
        return min(a.mean, b.mean)
    alpha = (a.mean - b.mean) / theta
    return float(
        a.mean * special.ndtr(-alpha)
        + b.mean * special.ndtr(alpha)
        - theta * std_normal_pdf(alpha)
    )


def broadcast_efficiency_2(pa: float, pb: float) -> float:
    """Mean transmissions to deliver one packet to both of two erasure receivers."""
    _check_prob(pa, "pa")
    _check_prob(pb, "pb")
    return 1.0 / (1.0 - pa) + 1.0 / (1.0 - pb) - 1.0 / (1.0 - pa * pb)


def broadcast_second_moment_2(pa: float, pb: float) -> float:
    """E[Y^2] for Y = max of two independent geometric attempt counts.

    Uses E[Y^2] = sum_k (2k+1) P{Y > k} with P{Y > k} = pa^k + pb^k - (pa pb)^k.
    """
    _check_prob(pa, "pa")
    _check_prob(pb, "pb")

    def g(x):
        return (1.0 + x) / (1.0 - x) ** 2

    return g(pa) + g(pb) - g(pa * pb)


# log Phi(beta) below this means the cap sits ~37 sigma under the mean
_LOG_MASS_FLOOR = math.log(1e-300)


def _mills(beta: float) -> float:
    """phi(beta) / Phi(beta), evaluated in log space."""
    log_mass = float(special.log_ndtr(beta))
    if log_mass < _LOG_MASS_FLOOR:
        raise DomainError(
            f"truncation at {beta:.3g} sigma removes essentially all probability mass"
        )
    return math.exp(-0.5 * beta * beta - 0.5 * math.log(2.0 * math.pi) - log_mass)


def truncate_upper(m: NormalMoments, cap: float) -> TruncatedMoments:
    if not m.std_dev > 0:
        raise DomainError("upper truncation needs a positive std_dev")
    beta = (cap - m.mean) / m.std_dev
    ratio = _mills(beta)
    mean = m.mean - m.std_dev * ratio
    var = m.var * (1.0 - beta * ratio - ratio**2)
    return TruncatedMoments(mean, math.sqrt(max(var, 0.0)), float(cap), m)


def truncated_pdf_cdf(m: NormalMoments, cap: float, x: float) -> tuple[float, float]:
    """Density and cdf at ``x`` of N(m) conditioned on not exceeding ``cap``."""
    if not m.std_dev > 0:
        raise DomainError("upper truncation needs a positive std_dev")
    beta = (cap - m.mean) / m.std_dev
    _mills(beta)  # same underflow guard as truncate_upper
    if x > cap:
        return 0.0, 1.0
    z = (x - m.mean) / m.std_dev
    log_mass = float(special.log_ndtr(beta))
    dens = math.exp(
        -0.5 * z * z - 0.5 * math.log(2.0 * math.pi) - log_mass
    ) / m.std_dev
    prob = math.exp(float(special.log_ndtr(z)) - log_mass)
    return dens, min(prob, 1.0)


def tail_horizon(successes: int, fail_prob: float, tol: float = TAIL_MASS) -> int:
    """Smallest K with P{NB(., successes, fail_prob) > K} < tol."""
    _check_prob(fail_prob)
    if successes <= 0 or fail_prob == 0.0:
        return max(int(successes), 0)
    mean = successes / (1.0 - fail_prob)
    sd = math.sqrt(successes * fail_prob) / (1.0 - fail_prob)
    k = int(mean + 10.0 * sd) + 1
    while nbinom.sf(k - successes, successes, 1.0 - fail_prob) >= tol:
        k = int(k * 1.5) + 1
    return k


def nb_total_pmf_table(max_successes: int, fail_prob: float, horizon: int) -> np.ndarray:
    """Rows n = 0..max_successes of P{NB(., n, fail_prob) = k}, k = 0..horizon."""
    _check_prob(fail_prob)
    n = np.arange(max_successes + 1)[:, None]
    k = np.arange(horizon + 1)[None, :]
    if fail_prob == 0.0:
        return (k == n).astype(float)
    with np.errstate(invalid="ignore"):
        table = nbinom.pmf(k - n, n, 1.0 - fail_prob)
    table[0, :] = 0.0
    table[0, 0] = 1.0
    return np.nan_to_num(table, nan=0.0)
