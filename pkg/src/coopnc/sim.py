"""Frame simulation for the ARQ, SNC and ANC retransmission strategies.

All three strategies share Session 1 (PT sends each primary packet until PR
or ST holds it).  ARQ then has ST repair PR losses and send its own packets
stop-and-wait; SNC/ANC send each secondary packet once and run a network-coded
retransmission session.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .channel import (
    FrameConfig,
    LinkProfile,
    RandomStream,
    SessionState,
    TruncationPolicy,
    validate_profile,
)

__all__ = [
    "SchemeId",
    "FrameOutcome",
    "FrameBatch",
    "EmpiricalSummary",
    "run_session1",
    "run_frame",
    "simulate_frames",
    "monte_carlo",
]


class SchemeId(enum.IntEnum):
    ARQ = _kernel.ARQ
    SNC = _kernel.SNC
    ANC = _kernel.ANC

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls[str(value).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown scheme {value!r}; expected ARQ, SNC or ANC") from None


@dataclass(frozen=True)
class FrameOutcome:
    scheme: SchemeId
    b1: int
    b2: int
    b3: int
    outage: bool
    delivered_primary: int
    delivered_secondary: int
    coded_slots: int
    state: SessionState | None = field(default=None, compare=False, repr=False)

    @property
    def total(self) -> int:
        return self.b1 + self.b2 + self.b3


@dataclass(frozen=True)
class FrameBatch:
    """Per-trial outcome columns from :func:`simulate_frames`."""

    scheme: SchemeId
    config: FrameConfig
    b1: np.ndarray
    b2: np.ndarray
    b3: np.ndarray
    outage: np.ndarray
    coded_slots: np.ndarray
    delivered_primary: np.ndarray
    delivered_secondary: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.b1 + self.b2 + self.b3

    def __len__(self):
        return len(self.b1)

    def outcome(self, t: int) -> FrameOutcome:
        return FrameOutcome(
            self.scheme, int(self.b1[t]), int(self.b2[t]), int(self.b3[t]),
            bool(self.outage[t]), int(self.delivered_primary[t]),
            int(self.delivered_secondary[t]), int(self.coded_slots[t]),
        )


@dataclass(frozen=True)
class EmpiricalSummary:
    """Monte Carlo aggregate.

    ``mean_total_given_ok`` averages only frames without outage; the
    throughputs divide the packet counts by that conditional mean.  Both are
    NaN when every frame was in outage (see ``conditional_defined``).
    """

    trials: int
    mean_total: float
    var_total: float
    histogram: dict
    outage_rate: float
    mean_total_given_ok: float
    throughput_primary: float
    throughput_secondary: float
    mean_b1: float = math.nan
    mean_b2: float = math.nan
    mean_b3: float = math.nan

    @property
    def conditional_defined(self) -> bool:
        return not math.isnan(self.mean_total_given_ok)

    @property
    def std_error(self) -> float:
        return math.sqrt(self.var_total / self.trials) if self.trials > 1 else math.nan


def _cap_arg(policy):
    return -1 if policy is None or policy.cap is None else int(policy.cap)


def _buffers(n_p, n_s):
    return (np.zeros(n_p, np.bool_), np.zeros(n_p, np.bool_), np.zeros(n_p, np.bool_),
            np.zeros(n_s, np.bool_), np.zeros(n_s, np.bool_))


def _rng_array(stream):
    return np.array([stream.state, 0], dtype=np.uint64)


def _sync(stream, rng):
    stream.advance_to(int(rng[0]), int(rng[1]))


def _state_from(n_p, n_s, slots, pr_has, st_has, sr_has_p, sr_has_s, pr_has_s):
    ids = np.flatnonzero
    return SessionState(
        n_primary=n_p,
        n_secondary=n_s,
        received_pr=set(ids(pr_has).tolist()),
        received_sr_secondary=set(ids(sr_has_s).tolist()),
        overheard_sr_primary=set(ids(sr_has_p).tolist()),
        overheard_pr_secondary=set(ids(pr_has_s).tolist()),
        at_st=set(ids(st_has).tolist()),
        slots_used=slots,
    )


def run_session1(profile: LinkProfile, n_primary: int, stream: RandomStream) -> SessionState:
    validate_profile(profile, FrameConfig(n_primary, 0) if n_primary else None)
    pr_has, st_has, sr_has_p, _, _ = _buffers(n_primary, 0)
    rng = _rng_array(stream)
    slots, _ = _kernel.session1(profile.p1, profile.q, profile.p12, n_primary, -1, 0,
                                rng, pr_has, st_has, sr_has_p)
    _sync(stream, rng)
    return _state_from(n_primary, 0, slots, pr_has, st_has, sr_has_p,
                       np.zeros(0, bool), np.zeros(0, bool))


def run_frame(scheme, profile: LinkProfile, config: FrameConfig,
              policy: TruncationPolicy | None, stream: RandomStream,
              check: bool = False) -> FrameOutcome:
    """Simulate one frame, consuming draws from ``stream``.

    With ``check=True`` the final packet bookkeeping is attached as
    ``outcome.state`` and its invariants are asserted.
    """
    scheme = SchemeId.parse(scheme)
    validate_profile(profile, config)
    if policy is not None:
        policy.check(config)
    n_p, n_s = config.n_primary, config.n_secondary
    bufs = _buffers(n_p, n_s)
    rng = _rng_array(stream)
    b1, b2, b3, out, coded = _kernel.frame(int(scheme), *profile.as_tuple(), n_p, n_s,
                                           _cap_arg(policy), rng, *bufs)
    _sync(stream, rng)
    pr_has, _, _, sr_has_s, _ = bufs
    state = None
    if check:
        state = _state_from(n_p, n_s, b1 + b2 + b3, *bufs)
        state.check_invariants(session1_done=not out or b2 + b3 > 0, complete=not out)
    return FrameOutcome(scheme, int(b1), int(b2), int(b3), bool(out),
                        int(pr_has.sum()), int(sr_has_s.sum()), int(coded), state)


def simulate_frames(scheme, profile: LinkProfile, config: FrameConfig,
                    policy: TruncationPolicy | None, trials: int, seed: int,
                    parallel: bool = True, first_trial: int = 0) -> FrameBatch:
    """Run ``trials`` frames; trial ``t`` uses ``RandomStream(seed, first_trial + t)``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    scheme = SchemeId.parse(scheme)
    validate_profile(profile, config)
    if policy is not None:
        policy.check(config)
    res = np.zeros((trials, 7), np.int64)
    kernel = _kernel.batch_parallel if parallel else _kernel.batch_serial
    p1, p2, p12, p21, q = (float(x) for x in profile.as_tuple())
    kernel(int(scheme), p1, p2, p12, p21, q, config.n_primary, config.n_secondary,
           _cap_arg(policy), np.uint64(seed & ((1 << 64) - 1)), first_trial, trials, res)
    return FrameBatch(scheme, config, res[:, 0], res[:, 1], res[:, 2], res[:, 3].astype(bool),
                      res[:, 4], res[:, 5], res[:, 6])


def summarize(batch: FrameBatch) -> EmpiricalSummary:
    total = batch.total
    n = len(total)
    # integer sums are exact, so the result does not depend on trial order
    s1 = int(total.sum())
    s2 = int(np.dot(total, total))
    mean = s1 / n
    var = (s2 - s1 * s1 / n) / (n - 1) if n > 1 else 0.0
    values, counts = np.unique(total, return_counts=True)
    ok = ~batch.outage
    n_ok = int(ok.sum())
    if n_ok:
        cond = int(total[ok].sum()) / n_ok
        eta_p = batch.config.n_primary / cond
        eta_s = batch.config.n_secondary / cond
    else:
        cond = eta_p = eta_s = math.nan
    return EmpiricalSummary(
        trials=n,
        mean_total=mean,
        var_total=max(var, 0.0),
        histogram={int(v): int(c) for v, c in zip(values, counts)},
        outage_rate=1.0 - n_ok / n,
        mean_total_given_ok=cond,
        throughput_primary=eta_p,
        throughput_secondary=eta_s,
        mean_b1=int(batch.b1.sum()) / n,
        mean_b2=int(batch.b2.sum()) / n,
        mean_b3=int(batch.b3.sum()) / n,
    )


def monte_carlo(scheme, profile: LinkProfile, config: FrameConfig,
                policy: TruncationPolicy | None, trials: int, seed: int,
                parallel: bool = True) -> EmpiricalSummary:
    return summarize(simulate_frames(scheme, profile, config, policy, trials, seed, parallel))
