"""Experiment runners behind the command line: report rows, sweeps, sizing, histograms."""

import csv
import math
from dataclasses import dataclass, fields

import numpy as np

from .analytic import (
    InfeasibleError,
    outage_probability,
    scheme_moments,
    size_secondary_load,
    throughput,
)
from .channel import FrameConfig, ProfileError, TruncationPolicy, validate_profile
from .sim import SchemeId, monte_carlo, simulate_frames
from .stats import DomainError, std_normal_cdf, std_normal_pdf, truncated_pdf_cdf

__all__ = ["ReportRow", "SizeRow", "Histogram", "evaluate_point", "run_experiment",
           "size_command", "histogram_command", "ks_distance", "write_csv", "fmt"]


def fmt(value):
    """CSV cell: 9 significant digits for floats, empty for missing."""
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return "nan" if math.isnan(value) else "%.9g" % value
    return str(value)


@dataclass
class ReportRow:
    scheme: str
    p1: float
    p2: float
    p12: float
    p21: float
    q: float
    Np: int
    Ns: int
    cap: object
    trials: int
    seed: int
    mean_B_sim: float | None = None
    mean_B_analytic: float | None = None
    eta_p_sim: float | None = None
    eta_s_sim: float | None = None
    eta_p_analytic: float | None = None
    eta_s_analytic: float | None = None
    outage_sim: float | None = None
    outage_analytic: float | None = None
    status: str = "ok"

    @classmethod
    def header(cls):
        return [f.name for f in fields(cls)]

    def cells(self):
        return [fmt(getattr(self, f.name)) for f in fields(self)]


def evaluate_point(scheme, exp) -> ReportRow:
    """Analytic (and, with trials > 0, simulated) metrics at one parameter point.

    A bounded cap selects the truncated-frame metrics.  Errors are reported in
    ``status`` so a sweep never drops a row.
    """
    scheme = SchemeId.parse(scheme)
    p = exp.profile
    row = ReportRow(scheme.name, p.p1, p.p2, p.p12, p.p21, p.q, exp.n_primary,
                    exp.n_secondary, "inf" if exp.cap is None else exp.cap,
                    exp.trials, exp.seed)
    try:
        config = exp.frame
        validate_profile(p, config)
        policy = exp.policy
        mode = "tfs" if policy.bounded else "afs"
        report = throughput(mode, scheme, p, config, policy, exp.model)
        row.mean_B_analytic = report.mean_frame
        row.eta_p_analytic = report.eta_primary
        row.eta_s_analytic = report.eta_secondary
        row.outage_analytic = report.outage
    except (ProfileError, DomainError) as exc:
        row.status = f"error: {exc}"
        return row
    if exp.trials > 0:
        summary = monte_carlo(scheme, p, config, policy if policy.bounded else None,
                              exp.trials, exp.seed)
        row.mean_B_sim = summary.mean_total_given_ok
        row.eta_p_sim = summary.throughput_primary
        row.eta_s_sim = summary.throughput_secondary
        row.outage_sim = summary.outage_rate
        if not summary.conditional_defined:
            row.status = "every simulated frame in outage"
    return row


def run_experiment(exp) -> list:
    """One row per (sweep point, scheme), in input order."""
    points = [exp] if exp.sweep is None else [
        exp.at(exp.sweep.varying, v) for v in exp.sweep.points()
    ]
    return [evaluate_point(s, point) for point in points for s in exp.schemes]


def write_csv(header, rows, stream):
    writer = csv.writer(stream, lineterminator="\r\n")
    writer.writerow(header)
    writer.writerows(rows)


@dataclass
class SizeRow:
    scheme: str
    Np: int
    cap: int
    target_outage: float
    Ns: int
    outage_analytic: float
    outage_sim: float | None = None

    @classmethod
    def header(cls):
        return [f.name for f in fields(cls)]

    def cells(self):
        return [fmt(getattr(self, f.name)) for f in fields(self)]


def size_command(profile, n_primary, cap, target_outage, schemes,
                 trials=0, seed=1, model="exact") -> list:
    """Largest Ns per scheme, its analytic outage, and optionally a Monte Carlo check.

    Raises InfeasibleError if any scheme has no feasible load.
    """
    if cap is None:
        raise ProfileError("sizing needs a bounded cap", "cap")
    validate_profile(profile)
    rows = []
    for scheme in schemes:
        scheme = SchemeId.parse(scheme)
        n_s = size_secondary_load(scheme, profile, n_primary, cap, target_outage, model)
        if n_primary + n_s == 0:
            raise InfeasibleError("a frame with no packets cannot be sized")
        config = FrameConfig(n_primary, n_s)
        analytic = outage_probability(scheme_moments(scheme, profile, config, model).total, cap)
        row = SizeRow(scheme.name, n_primary, cap, target_outage, n_s, analytic)
        if trials > 0:
            row.outage_sim = monte_carlo(scheme, profile, config, TruncationPolicy(cap),
                                         trials, seed).outage_rate
        rows.append(row)
    return rows


@dataclass
class Histogram:
    """Empirical pmf of B next to the fitted density at integer points.

    With a cap the table covers frames that finished within it and is compared
    with the truncated normal; ``outage_rate`` counts the rest.
    """

    scheme: SchemeId
    values: np.ndarray
    frequency: np.ndarray
    density: np.ndarray
    ks: float | None
    outage_rate: float
    fit_mean: float
    fit_std: float

    header = ("B", "frequency", "fitted_density")

    def cells(self):
        return [[str(int(b)), fmt(float(f)), fmt(float(d))]
                for b, f, d in zip(self.values, self.frequency, self.density)]


def ks_distance(values, counts, cdf):
    """sup_k |F_emp(k) - F_fit(k + 1/2)| over the integer support.

    The half-step continuity correction compares a lattice law with a
    continuous fit at the midpoint between atoms.
    """
    values = np.asarray(values)
    cum = np.concatenate([[0.0], np.cumsum(np.asarray(counts, dtype=float))])
    # every integer from just below the first atom to the last one
    grid = np.arange(values[0] - 1, values[-1] + 1)
    emp = cum[np.searchsorted(values, grid, side="right")] / cum[-1]
    fit = np.array([cdf(k + 0.5) for k in grid])
    return float(np.max(np.abs(emp - fit)))


def histogram_command(scheme, profile, config, policy, trials, seed, model="exact") -> Histogram:
    scheme = SchemeId.parse(scheme)
    bounded = policy is not None and policy.bounded
    batch = simulate_frames(scheme, profile, config, policy if bounded else None, trials, seed)
    outage_rate = float(batch.outage.mean())
    fit = scheme_moments(scheme, profile, config, model).total
    # outage frames stop at exactly cap; keep only completed ones
    values, counts = np.unique(batch.total[~batch.outage], return_counts=True)
    if counts.sum() == 0:
        return Histogram(scheme, values, counts.astype(float), counts.astype(float), None,
                         outage_rate, fit.mean, fit.std_dev)
    freq = counts / counts.sum()
    if fit.std_dev == 0.0:
        # point-mass fit: no density to compare against
        density = np.where(values == round(fit.mean), 1.0, 0.0)
        ks = None
    elif bounded:
        density = np.array([truncated_pdf_cdf(fit, policy.cap, float(v))[0] for v in values])
        ks = ks_distance(values, counts, lambda x: truncated_pdf_cdf(fit, policy.cap, x)[1])
    else:
        z = (values - fit.mean) / fit.std_dev
        density = std_normal_pdf(z) / fit.std_dev
        ks = ks_distance(values, counts,
                         lambda x: float(std_normal_cdf((x - fit.mean) / fit.std_dev)))
    return Histogram(scheme, values, freq, density, ks, outage_rate,
                     fit.mean, fit.std_dev)
