"""Network configuration, per-frame packet bookkeeping and random streams.

Topology: PT -> PR (loss p1), ST -> SR (p2), PT -> SR (p12), ST -> PR (p21)
and PT -> ST (q).  Every link is a memoryless packet-erasure link.
"""

import math
from dataclasses import dataclass, field, fields

__all__ = [
    "ProfileError",
    "NonTerminatingError",
    "LinkProfile",
    "FrameConfig",
    "TruncationPolicy",
    "SessionState",
    "RandomStream",
    "validate_profile",
    "bernoulli_loss",
    "DEFAULT_PROFILE",
]

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_STREAM_SALT = 0xD1B54A32D192ED03


class ProfileError(ValueError):
    """Invalid link profile or workload; ``field`` names the offender."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class NonTerminatingError(ProfileError):
    """A session would need an infinite expected number of transmissions."""


@dataclass(frozen=True)
class LinkProfile:
    p1: float
    p2: float
    p12: float
    p21: float
    q: float

    def as_tuple(self):
        return (self.p1, self.p2, self.p12, self.p21, self.q)

    def replace(self, **changes):
        return LinkProfile(**{**self.__dict__, **changes})

    @property
    def lost_at_pr(self) -> float:
        """P{PR missed a packet | Session 1 delivered it to PR or ST}."""
        joint = self.p1 * self.q
        if joint >= 1.0:
            return 0.0
        return self.p1 * (1.0 - self.q) / (1.0 - joint)


DEFAULT_PROFILE = LinkProfile(p1=0.5, p2=0.4, p12=0.3, p21=0.2, q=0.1)


@dataclass(frozen=True)
class FrameConfig:
    n_primary: int
    n_secondary: int

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if int(value) != value or value < 0:
                raise ProfileError(f"{f.name} must be a non-negative integer", f.name)
        if self.n_primary + self.n_secondary < 1:
            raise ProfileError("frame must carry at least one packet", "n_primary")


@dataclass(frozen=True)
class TruncationPolicy:
    """Frame cap in resource units; ``cap=None`` is the adaptive (unbounded) case."""

    cap: int | None = None
    target_outage: float = 0.1

    def __post_init__(self):
        if self.cap is not None and (int(self.cap) != self.cap or self.cap < 0):
            raise ProfileError("cap must be a non-negative integer or None", "cap")
        if not 0.0 < self.target_outage < 1.0:
            raise ProfileError("target_outage must be in (0, 1)", "target_outage")

    @property
    def bounded(self) -> bool:
        return self.cap is not None

    def check(self, config: FrameConfig):
        if self.bounded and self.cap < config.n_primary + config.n_secondary:
            raise ProfileError(
                f"cap {self.cap} is below the packet count "
                f"{config.n_primary + config.n_secondary}",
                "cap",
            )
        return self


@dataclass
class SessionState:
    """Who holds which packet ids.  Primary ids are 0..Np-1, secondary 0..Ns-1."""

    n_primary: int
    n_secondary: int
    received_pr: set = field(default_factory=set)  # primary ids at PR
    received_sr_secondary: set = field(default_factory=set)  # secondary ids at SR
    overheard_sr_primary: set = field(default_factory=set)  # primary ids at SR
    overheard_pr_secondary: set = field(default_factory=set)  # secondary ids at PR
    at_st: set = field(default_factory=set)  # primary ids at ST
    slots_used: int = 0

    def check_invariants(self, session1_done=True, complete=False):
        primary = range(self.n_primary)
        secondary = range(self.n_secondary)
        for name in ("received_pr", "overheard_sr_primary", "at_st"):
            ids = getattr(self, name)
            if not ids <= set(primary):
                raise AssertionError(f"{name} holds ids outside 0..{self.n_primary - 1}")
        for name in ("received_sr_secondary", "overheard_pr_secondary"):
            if not getattr(self, name) <= set(secondary):
                raise AssertionError(f"{name} holds ids outside 0..{self.n_secondary - 1}")
        if session1_done and (self.received_pr | self.at_st) != set(primary):
            raise AssertionError("Session 1 ended with a primary packet at neither PR nor ST")
        delivered = len(self.received_pr) + len(self.received_sr_secondary)
        if complete:
            if self.received_pr != set(primary):
                raise AssertionError("primary message incomplete at PR")
            if self.received_sr_secondary != set(secondary):
                raise AssertionError("secondary message incomplete at SR")
        if self.slots_used < len(self.received_pr | self.at_st) and session1_done:
            raise AssertionError("fewer slots than packets delivered in Session 1")
        return delivered


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def stream_start(seed: int, stream_index: int) -> int:
    """Initial counter for stream ``stream_index`` of ``seed``."""
    return _mix64((_mix64(seed & MASK64) ^ ((stream_index * _STREAM_SALT) & MASK64)))


class RandomStream:
    """Counter-based uniform stream (SplitMix64 over a Weyl sequence).

    Draw ``i`` of stream ``(seed, stream_index)`` is a pure function of those
    three integers, so Monte Carlo trials can run in any order or on any
    number of workers.  The compiled simulator reproduces the same arithmetic.
    """

    def __init__(self, seed: int, stream_index: int = 0):
        if seed < 0 or stream_index < 0:
            raise ValueError("seed and stream_index must be non-negative")
        self.seed = seed & MASK64
        self.stream_index = stream_index
        self.state = stream_start(self.seed, stream_index)
        self.draws = 0

    def __repr__(self):
        return (
            f"RandomStream(seed={self.seed}, stream_index={self.stream_index}, "
            f"draws={self.draws})"
        )

    def uniform(self) -> float:
        self.state = (self.state + GOLDEN) & MASK64
        self.draws += 1
        return (_mix64(self.state) >> 11) * 2.0**-53

    def advance_to(self, state: int, draws: int):
        """Sync after the compiled kernel consumed draws from this stream."""
        self.state = state & MASK64
        self.draws += draws


def bernoulli_loss(p: float, stream: RandomStream) -> bool:
    """True (packet erased) with probability ``p``; consumes one draw."""
    return stream.uniform() < p


def validate_profile(profile: LinkProfile, config: FrameConfig | None = None) -> LinkProfile:
    for name, value in zip(("p1", "p2", "p12", "p21", "q"), profile.as_tuple()):
        if not (isinstance(value, (int, float)) and math.isfinite(value) and 0.0 <= value <= 1.0):
            raise ProfileError(f"{name} must be a probability in [0, 1], got {value!r}", name)
    n_p = 1 if config is None else config.n_primary
    n_s = 1 if config is None else config.n_secondary
    if n_p > 0 and profile.p1 * profile.q >= 1.0:
        raise NonTerminatingError(
            "p1 = q = 1: primary packets never leave the PT (Session 1 diverges)", "q"
        )
    # conservative: any chance of a PR loss that only ST can repair
    if n_p > 0 and profile.p21 >= 1.0 and profile.p1 * (1.0 - profile.q) > 0.0:
        raise NonTerminatingError(
            "p21 = 1 while primary packets can be lost at PR: retransmissions never succeed",
            "p21",
        )
    if n_s > 0 and profile.p2 >= 1.0:
        raise NonTerminatingError(
            "p2 = 1: secondary packets never reach SR", "p2"
        )
    return profile
