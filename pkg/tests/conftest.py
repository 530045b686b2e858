import pytest
from hypothesis import settings, strategies as st

from coopnc import DEFAULT_PROFILE, FrameConfig, LinkProfile

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

prob = st.floats(0.0, 0.9, allow_nan=False).map(lambda x: round(x, 3))


@st.composite
def profiles(draw, max_loss=0.9):
    p = st.floats(0.0, max_loss, allow_nan=False).map(lambda x: round(x, 3))
    return LinkProfile(draw(p), draw(p), draw(p), draw(p), draw(p))


@pytest.fixture
def ref_profile():
    return DEFAULT_PROFILE


@pytest.fixture
def ref_config():
    return FrameConfig(50, 30)


LOSSLESS = LinkProfile(0.0, 0.0, 0.0, 0.0, 0.0)
