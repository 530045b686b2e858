"""Closed-form and semi-analytic frame-size model.

Two moment models are available wherever a normal approximation of the total
frame size ``B`` is needed:

``"plugin"``
    Per-session normal laws with every random packet count (losses at PR/SR,
    encodable counts, number of XOR pairs) replaced by its mean.  This is the
    classical construction; it ignores the spread of those counts and so
    underestimates ``Var(B)``.
``"exact"``
    Exact first two moments of each session, obtained by conditioning on the
    encodable/residual packet counts (law of total variance).  Means agree
    with the plugin model for ARQ and with :func:`expected_b3_snc` /
    :func:`expected_b3_anc` for the coded schemes.

The adaptive-frame (afs) throughput never depends on the choice: it uses the
exact expected frame size.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .channel import FrameConfig, LinkProfile, validate_profile
from .sim import SchemeId
from .stats import (
    DomainError,
    NormalMoments,
    TAIL_MASS,
    broadcast_efficiency_2,
    broadcast_second_moment_2,
    max_of_normals_moments,
    min_of_normals_mean,
    nb_normal_approx,
    nb_total_pmf_table,
    std_normal_quantile,
    std_normal_sf,
    tail_horizon,
    truncate_upper,
)

__all__ = [
    "InfeasibleError",
    "SchemeMoments",
    "ThroughputReport",
    "MODELS",
    "expected_frame_arq",
    "expected_frame",
    "expected_b3_snc",
    "expected_b3_anc",
    "retransmission_bound",
    "coded_phase_exact",
    "scheme_moments",
    "outage_probability",
    "throughput",
    "cap_for_outage",
    "size_secondary_load",
]

MODELS = ("exact", "plugin")


class InfeasibleError(ValueError):
    """No secondary load meets the outage target."""


@dataclass(frozen=True)
class SchemeMoments:
    scheme: SchemeId
    session1: NormalMoments
    session2: NormalMoments
    session3: NormalMoments

    @property
    def total(self) -> NormalMoments:
        return self.session1 + self.session2 + self.session3


@dataclass(frozen=True)
class ThroughputReport:
    mode: str
    eta_primary: float
    eta_secondary: float
    mean_frame: float
    outage: float = 0.0


def _inv(p):
    # 1/(1-p) for a link that must carry traffic; a dead link only ever
    # multiplies zero load (validate_profile guarantees that)
    return 0.0 if p >= 1.0 else 1.0 / (1.0 - p)


def _nb(count, p):
    """NB normal law for a possibly zero (and then possibly dead-link) load."""
    if count <= 0:
        return NormalMoments(0.0, 0.0)
    return nb_normal_approx(count, p)


def _nb_exact(count_mean, count_var, p):
    """Moments of NB(., K, p) trials with a random success count K."""
    if count_mean <= 0:
        return NormalMoments(0.0, 0.0)
    inv = _inv(p)
    return NormalMoments.from_var(
        count_mean * inv, count_mean * p * inv**2 + count_var * inv**2
    )


def _setup(profile, config):
    validate_profile(profile, config)
    return profile, config.n_primary, config.n_secondary


def expected_frame_arq(profile: LinkProfile, config: FrameConfig) -> float:
    p1, p2, _, p21, q = _setup(profile, config)[0].as_tuple()
    n_p, n_s = config.n_primary, config.n_secondary
    lost = n_p * profile.lost_at_pr
    return n_p / (1.0 - p1 * q) + lost * _inv(p21) + n_s * _inv(p2)


def retransmission_bound(profile: LinkProfile, config: FrameConfig) -> float:
    """Upper bound on E[B3] shared by SNC and ANC (no coding opportunity at all)."""
    _setup(profile, config)
    lost = config.n_primary * profile.lost_at_pr
    return lost * _inv(profile.p21) + config.n_secondary * profile.p2 * _inv(profile.p2)


def _binom_pmf(n, p):
    return binom.pmf(np.arange(n + 1), n, p)


def expected_b3_snc(profile: LinkProfile, config: FrameConfig, form: str = "expanded") -> float:
    """E[B3] for SNC by total expectation over PR/SR loss counts.

    ``form="nested"`` evaluates the four-fold sum over (kp, ks, i, j) as
    written; ``"expanded"`` uses
    E[B3 | kp, ks] = kp/(1-p21) + ks/(1-p2) - E[min(i, j)]/(1-p2 p21)
    with E[min] = sum_t P{i >= t} P{j >= t}.
    """
    _, n_p, n_s = _setup(profile, config)
    p2, p12, p21 = profile.p2, profile.p12, profile.p21
    w_p = _binom_pmf(n_p, profile.lost_at_pr)  # PR loss count kp
    w_s = _binom_pmf(n_s, p2)  # SR loss count ks
    inv21, inv2 = _inv(p21), _inv(p2)
    if form == "expanded":
        t = np.arange(1, min(n_p, n_s) + 1)
        surv_i = binom.sf(t[None, :] - 1, np.arange(n_p + 1)[:, None], 1.0 - p12)
        surv_j = binom.sf(t[None, :] - 1, np.arange(n_s + 1)[:, None], 1.0 - p21)
        e_min = surv_i @ surv_j.T
        kp = np.arange(n_p + 1)[:, None]
        ks = np.arange(n_s + 1)[None, :]
        cond = kp * inv21 + ks * inv2 - e_min / (1.0 - p2 * p21)
        return float(w_p @ cond @ w_s)
    if form != "nested":
        raise ValueError(f"unknown form {form!r}")
    mu_bc = broadcast_efficiency_2(p21, p2) if p21 < 1.0 else 0.0
    ks = np.arange(n_s + 1)
    j = np.arange(n_s + 1)
    with np.errstate(invalid="ignore"):
        w_j = np.nan_to_num(binom.pmf(j[None, :], ks[:, None], 1.0 - p21))  # [ks, j]
    total = 0.0
    for kp in range(n_p + 1):
        if w_p[kp] == 0.0:
            continue
        i = np.arange(kp + 1)
        w_i = binom.pmf(i, kp, 1.0 - p12)
        kmin = np.minimum(i[:, None, None], j[None, None, :])  # [i, 1, j]
        f = kmin * mu_bc + (kp - kmin) * inv21 + (ks[None, :, None] - kmin) * inv2
        inner = np.einsum("i,sj,isj->s", w_i, w_j, f)
        total += w_p[kp] * float(inner @ w_s)
    return total


def _class_probs(profile):
    """Per-packet probabilities of being encodable or residual after Sessions 1-2."""
    c = profile.lost_at_pr
    return (c * (1.0 - profile.p12), c * profile.p12,
            profile.p2 * (1.0 - profile.p21), profile.p2 * profile.p21)


def _nb_tables(n_p, n_s, p21, p2):
    horizon = max(tail_horizon(n_p, p21) if n_p else 0,
                  tail_horizon(n_s, p2) if n_s else 0, 1)
    f1 = nb_total_pmf_table(n_p, p21, horizon) if n_p else np.eye(1, horizon + 1)
    f2 = nb_total_pmf_table(n_s, p2, horizon) if n_s else np.eye(1, horizon + 1)
    return f1, f2


def _anc_coded_mean_table(n_p, n_s, p21, p2):
    """E[max(X1, X2)] for every (kp, ks), X1 ~ NB(., kp, p21), X2 ~ NB(., ks, p2).

    Sums k P{max = k} with P{max = k} = P{X2 = k} P{X1 <= k} + P{X1 = k} P{X2 <= k-1}.
    """
    f1, f2 = _nb_tables(n_p, n_s, p21, p2)
    c1 = np.cumsum(f1, axis=1)
    c2 = np.cumsum(f2, axis=1)
    c2_prev = np.hstack([np.zeros((c2.shape[0], 1)), c2[:, :-1]])
    k = np.arange(f1.shape[1], dtype=float)
    out = np.empty((n_p + 1, n_s + 1))
    for kp in range(n_p + 1):
        pmf = f2 * c1[kp][None, :] + f1[kp][None, :] * c2_prev
        out[kp] = pmf @ k
    return out


def _anc_coded_moment_tables(n_p, n_s, p21, p2):
    """E[M] and E[M^2] of M = max(X1, X2) via survival sums."""
    f1, f2 = _nb_tables(n_p, n_s, p21, p2)
    c1 = np.cumsum(f1, axis=1)
    c2 = np.cumsum(f2, axis=1)
    k = np.arange(f1.shape[1], dtype=float)
    m1 = np.empty((n_p + 1, n_s + 1))
    m2 = np.empty_like(m1)
    for kp in range(n_p + 1):
        surv = np.clip(1.0 - c1[kp][None, :] * c2, 0.0, 1.0)
        m1[kp] = surv.sum(axis=1)
        m2[kp] = surv @ (2.0 * k + 1.0)
    return m1, m2


def expected_b3_anc(profile: LinkProfile, config: FrameConfig) -> float:
    """E[B3] for ANC: coded phase by exact NB max law, plus residual unicasts.

    The residual terms are summed in their aggregate form
    E[residual primaries]/(1-p21) + E[residual secondaries]/(1-p2), which is
    what the per-(kp, ks) terms add up to and stays finite at p12 = 1.
    """
    _, n_p, n_s = _setup(profile, config)
    enc_p, res_p, enc_s, res_s = _class_probs(profile)
    n_pg = n_p if enc_p > 0 else 0
    n_sg = n_s if enc_s > 0 else 0
    table = _anc_coded_mean_table(n_pg, n_sg, profile.p21, profile.p2)
    coded = float(_binom_pmf(n_pg, enc_p) @ table @ _binom_pmf(n_sg, enc_s))
    return coded + n_p * res_p * _inv(profile.p21) + n_s * res_s * _inv(profile.p2)


def coded_phase_exact(scheme, k_p: int, k_s: int, p21: float, p2: float) -> float:
    """Expected slots to clear ``k_p`` encodable primaries and ``k_s`` secondaries.

    ANC is solved as an absorbing Markov chain on the pending counts; SNC pairs
    ``min(k_p, k_s)`` packets (each repeated until both receivers have it) and
    unicasts the rest.
    """
    scheme = SchemeId.parse(scheme)
    if k_p < 0 or k_s < 0:
        raise ValueError("packet counts must be non-negative")
    for name, p in (("p21", p21), ("p2", p2)):
        if not 0.0 <= p < 1.0:
            raise DomainError(f"{name} must be in [0, 1), got {p}")
    if scheme == SchemeId.SNC:
        k = min(k_p, k_s)
        return k * broadcast_efficiency_2(p21, p2) + (k_p - k) / (1 - p21) + (k_s - k) / (1 - p2)
    if scheme == SchemeId.ARQ:
        return k_p / (1 - p21) + k_s / (1 - p2)
    e = np.zeros((k_p + 1, k_s + 1))
    for a in range(k_p + 1):
        for b in range(k_s + 1):
            if a == 0 and b == 0:
                continue
            s1 = 1.0 - p21 if a else 0.0
            s2 = 1.0 - p2 if b else 0.0
            acc = 1.0
            if a:
                acc += s1 * (1.0 - s2) * e[a - 1, b]
            if b:
                acc += (1.0 - s1) * s2 * e[a, b - 1]
            if a and b:
                acc += s1 * s2 * e[a - 1, b - 1]
            e[a, b] = acc / (1.0 - (1.0 - s1) * (1.0 - s2))
    return float(e[k_p, k_s])


def expected_frame(scheme, profile: LinkProfile, config: FrameConfig) -> float:
    """Exact E[B] in the adaptive-frame case."""
    scheme = SchemeId.parse(scheme)
    if scheme == SchemeId.ARQ:
        return expected_frame_arq(profile, config)
    b1 = config.n_primary / (1.0 - profile.p1 * profile.q)
    b3 = (expected_b3_snc if scheme == SchemeId.SNC else expected_b3_anc)(profile, config)
    return b1 + config.n_secondary + b3


def _plugin_session3(scheme, profile, n_p, n_s):
    p2, p12, p21 = profile.p2, profile.p12, profile.p21
    lost_p = n_p * profile.lost_at_pr
    lost_s = n_s * p2
    if scheme == SchemeId.SNC:
        enc_i = NormalMoments(lost_p * (1 - p12), math.sqrt(lost_p * p12 * (1 - p12)))
        enc_j = NormalMoments(lost_s * (1 - p21), math.sqrt(lost_s * p21 * (1 - p21)))
        # a normal min can dip below zero for nearly empty sets
        pairs = min(max(min_of_normals_mean(enc_i, enc_j), 0.0), lost_p, lost_s)
        if pairs > 0:
            per_pair = max_of_normals_moments(_nb(1, p21), _nb(1, p2))
            coded = NormalMoments.from_var(pairs * per_pair.mean, pairs * per_pair.var)
        else:
            coded = NormalMoments(0.0, 0.0)
        return coded + _nb(lost_p - pairs, p21) + _nb(lost_s - pairs, p2)
    x1 = _nb(lost_p * (1 - p12), p21)
    x2 = _nb(lost_s * (1 - p21), p2)
    return max_of_normals_moments(x1, x2) + _nb(lost_p * p12, p21) + _nb(n_s * p2 * p21, p2)


def _exact_session3(scheme, profile, n_p, n_s):
    p2, p21 = profile.p2, profile.p21
    enc_p, res_p, enc_s, res_s = _class_probs(profile)
    inv21, inv2 = _inv(p21), _inv(p2)
    # grids only span counts that can occur
    n_pg = n_p if enc_p > 0 else 0
    n_sg = n_s if enc_s > 0 else 0
    i = np.arange(n_pg + 1)[:, None].astype(float)
    j = np.arange(n_sg + 1)[None, :].astype(float)
    if scheme == SchemeId.SNC:
        kmin = np.minimum(i, j)
        if n_pg and n_sg:
            mu_bc = broadcast_efficiency_2(p21, p2)
            var_bc = broadcast_second_moment_2(p21, p2) - mu_bc**2
        else:
            mu_bc = var_bc = 0.0
        m = kmin * mu_bc + (i - kmin) * inv21 + (j - kmin) * inv2
        v = kmin * var_bc + (i - kmin) * p21 * inv21**2 + (j - kmin) * p2 * inv2**2
    else:
        m, second = _anc_coded_moment_tables(n_pg, n_sg, p21, p2)
        v = second - m**2
    w_i = _binom_pmf(n_pg, enc_p)
    w_j = _binom_pmf(n_sg, enc_s)

    # residual counts given the encodable counts are binomial on the rest
    rho_p = res_p / (1.0 - enc_p) if enc_p < 1.0 else 0.0
    rho_s = res_s / (1.0 - enc_s) if enc_s < 1.0 else 0.0
    r_mean_p, r_var_p = (n_p - i) * rho_p, (n_p - i) * rho_p * (1 - rho_p)
    r_mean_s, r_var_s = (n_s - j) * rho_s, (n_s - j) * rho_s * (1 - rho_s)

    cond_mean = m + r_mean_p * inv21 + r_mean_s * inv2
    cond_var = v + r_mean_p * p21 * inv21**2 + r_mean_s * p2 * inv2**2
    cond_second = cond_var + cond_mean**2 + r_var_p * inv21**2 + r_var_s * inv2**2
    mean = float(w_i @ cond_mean @ w_j)
    second = float(w_i @ cond_second @ w_j)
    return NormalMoments.from_var(mean, second - mean**2)


def scheme_moments(scheme, profile: LinkProfile, config: FrameConfig,
                   model: str = "exact") -> SchemeMoments:
    """Per-session normal laws of the frame size; see the module docstring."""
    scheme = SchemeId.parse(scheme)
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}, got {model!r}")
    _, n_p, n_s = _setup(profile, config)
    p1, p2, _, p21, q = profile.as_tuple()
    s1 = _nb(n_p, p1 * q)
    lost_p = n_p * profile.lost_at_pr
    if scheme == SchemeId.ARQ:
        if model == "plugin":
            s2 = _nb(lost_p, p21)
        else:
            c = profile.lost_at_pr
            s2 = _nb_exact(lost_p, n_p * c * (1 - c), p21)
        return SchemeMoments(scheme, s1, s2, _nb(n_s, p2))
    s2 = NormalMoments(float(n_s), 0.0)
    if model == "plugin":
        s3 = _plugin_session3(scheme, profile, n_p, n_s)
    else:
        s3 = _exact_session3(scheme, profile, n_p, n_s)
    return SchemeMoments(scheme, s1, s2, s3)


def outage_probability(moments: NormalMoments, cap: float) -> float:
    """P{B > cap} under the normal law; a step function when std_dev is 0."""
    if moments.std_dev == 0.0:
        return 0.0 if moments.mean <= cap else 1.0
    return float(std_normal_sf((cap - moments.mean) / moments.std_dev))


def throughput(mode: str, scheme, profile: LinkProfile, config: FrameConfig,
               policy=None, model: str = "exact") -> ThroughputReport:
    """Packets delivered per resource unit for each system.

    afs divides by the exact E[B].  tfs divides by the mean of the normal
    approximation truncated at ``policy.cap`` and reports P{B > cap}.
    """
    mode = mode.lower()
    if mode == "afs":
        mean = expected_frame(scheme, profile, config)
        return ThroughputReport("afs", config.n_primary / mean, config.n_secondary / mean, mean)
    if mode != "tfs":
        raise ValueError(f"mode must be 'afs' or 'tfs', got {mode!r}")
    if policy is None or policy.cap is None:
        raise ValueError("tfs throughput needs a bounded cap")
    policy.check(config)
    total = scheme_moments(scheme, profile, config, model).total
    outage = outage_probability(total, policy.cap)
    if total.std_dev == 0.0:
        if outage == 1.0:
            raise DomainError("deterministic frame exceeds the cap")
        mean = total.mean
    else:
        mean = truncate_upper(total, policy.cap).mean
    return ThroughputReport("tfs", config.n_primary / mean, config.n_secondary / mean,
                            mean, outage)


def cap_for_outage(moments: NormalMoments, target: float) -> float:
    """Frame cap whose normal outage equals ``target``: mean + sd * Qinv(target)."""
    if not 0.0 < target < 1.0:
        raise DomainError(f"target outage must be in (0, 1), got {target}")
    return moments.mean - moments.std_dev * std_normal_quantile(target)


def size_secondary_load(scheme, profile: LinkProfile, n_primary: int, cap: int,
                        target_outage: float, model: str = "exact") -> int:
    """Largest Ns whose analytic outage at ``cap`` stays within ``target_outage``.

    Binary search over 0..cap-Np; any larger Ns cannot fit in the cap at all.
    """
    if not 0.0 < target_outage < 1.0:
        raise DomainError(f"target outage must be in (0, 1), got {target_outage}")
    if cap < n_primary:
        raise InfeasibleError(f"cap {cap} cannot hold {n_primary} primary packets")

    def outage(n_s):
        if n_primary + n_s == 0:
            return 0.0
        m = scheme_moments(scheme, profile, FrameConfig(n_primary, n_s), model).total
        return outage_probability(m, cap)

    if outage(0) > target_outage:
        raise InfeasibleError(
            f"even Ns = 0 exceeds outage {target_outage} at cap {cap} "
            f"({SchemeId.parse(scheme).name}, outage {outage(0):.4g})"
        )
    lo, hi = 0, cap - n_primary
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if outage(mid) <= target_outage:
            lo = mid
        else:
            hi = mid - 1
    return lo
