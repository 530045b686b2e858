import numpy as np
import pytest
from hypothesis import given, strategies as st

from coopnc import _kernel
from coopnc.channel import (
    DEFAULT_PROFILE,
    FrameConfig,
    LinkProfile,
    NonTerminatingError,
    ProfileError,
    RandomStream,
    SessionState,
    TruncationPolicy,
    bernoulli_loss,
    stream_start,
    validate_profile,
)


def test_validate_accepts_reference_and_lossless():
    assert validate_profile(DEFAULT_PROFILE, FrameConfig(50, 30)) is DEFAULT_PROFILE
    validate_profile(LinkProfile(0, 0, 0, 0, 0), FrameConfig(1, 1))


@pytest.mark.parametrize("field,value", [("p1", 1.5), ("p2", -0.1), ("p12", float("nan")),
                                         ("p21", float("inf")), ("q", "0.1")])
def test_validate_names_bad_field(field, value):
    profile = DEFAULT_PROFILE.replace(**{field: value})
    with pytest.raises(ProfileError) as err:
        validate_profile(profile)
    assert err.value.field == field
    assert field in str(err.value)


def test_non_terminating_configurations():
    with pytest.raises(NonTerminatingError) as err:
        validate_profile(DEFAULT_PROFILE.replace(p1=1.0, q=1.0), FrameConfig(5, 5))
    assert err.value.field == "q"
    with pytest.raises(NonTerminatingError):
        validate_profile(DEFAULT_PROFILE.replace(p21=1.0), FrameConfig(5, 5))
    with pytest.raises(NonTerminatingError):
        validate_profile(DEFAULT_PROFILE.replace(p2=1.0), FrameConfig(5, 5))
    # dead links that carry no traffic are fine
    validate_profile(DEFAULT_PROFILE.replace(p2=1.0), FrameConfig(5, 0))
    validate_profile(DEFAULT_PROFILE.replace(p21=1.0, q=0.0, p1=0.0), FrameConfig(5, 5))
    validate_profile(DEFAULT_PROFILE.replace(p21=1.0), FrameConfig(0, 5))


def test_lost_at_pr():
    assert DEFAULT_PROFILE.lost_at_pr == pytest.approx(0.45 / 0.95, rel=1e-15)
    assert LinkProfile(1, 0, 0, 0, 1).lost_at_pr == 0.0


def test_frame_config_validation():
    with pytest.raises(ProfileError):
        FrameConfig(-1, 3)
    with pytest.raises(ProfileError):
        FrameConfig(2.5, 3)
    with pytest.raises(ProfileError):
        FrameConfig(0, 0)
    FrameConfig(0, 1)


def test_truncation_policy():
    assert not TruncationPolicy().bounded
    pol = TruncationPolicy(120)
    assert pol.bounded and pol.check(FrameConfig(50, 70)) is pol
    with pytest.raises(ProfileError):
        pol.check(FrameConfig(50, 71))
    with pytest.raises(ProfileError):
        TruncationPolicy(-1)
    with pytest.raises(ProfileError):
        TruncationPolicy(100, target_outage=1.0)


def test_splitmix_reference_output():
    # published SplitMix64 outputs for seed 0
    stream = RandomStream(0)
    stream.state = 0
    expected = [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]
    for word in expected:
        assert stream.uniform() == (word >> 11) * 2.0**-53


def test_stream_determinism_and_independence():
    a = [RandomStream(7, 3).uniform() for _ in range(1)]
    b = [RandomStream(7, 3).uniform() for _ in range(1)]
    assert a == b
    s1, s2 = RandomStream(7, 3), RandomStream(7, 4)
    first = [s1.uniform() for _ in range(100)]
    second = [s2.uniform() for _ in range(100)]
    assert first != second
    assert s1.draws == 100
    assert all(0.0 <= u < 1.0 for u in first)
    with pytest.raises(ValueError):
        RandomStream(-1)


@given(st.integers(0, 2**64 - 1), st.integers(0, 10**9))
def test_kernel_stream_start_matches(seed, index):
    assert int(_kernel.stream_start(np.uint64(seed), index)) == stream_start(seed, index)


def test_kernel_draws_match_python_stream():
    stream = RandomStream(12345, 17)
    rng = np.array([stream.state, 0], dtype=np.uint64)
    kernel = [_kernel._draw(rng) for _ in range(500)]
    python = [stream.uniform() for _ in range(500)]
    assert kernel == python
    assert int(rng[1]) == 500


def test_bernoulli_loss_frequency():
    stream = RandomStream(3)
    n = 200_000
    losses = sum(bernoulli_loss(0.3, stream) for _ in range(n))
    # 5 sigma band
    assert abs(losses / n - 0.3) < 5 * (0.3 * 0.7 / n) ** 0.5
    assert not bernoulli_loss(0.0, stream)
    assert bernoulli_loss(1.0, stream)


def test_session_state_invariants():
    s = SessionState(3, 2, received_pr={0, 2}, at_st={1}, slots_used=3)
    assert s.check_invariants() == 2
    with pytest.raises(AssertionError):
        SessionState(3, 2, received_pr={0}, at_st={1}, slots_used=3).check_invariants()
    with pytest.raises(AssertionError):
        SessionState(3, 2, received_pr={0, 1, 5}, slots_used=3).check_invariants()
    with pytest.raises(AssertionError):
        s.check_invariants(complete=True)
    done = SessionState(2, 1, received_pr={0, 1}, received_sr_secondary={0}, slots_used=3)
    assert done.check_invariants(complete=True) == 3
