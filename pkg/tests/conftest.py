import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from trimlevy.paths import CadlagPath

settings.register_profile("default", max_examples=150, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_path(rng, max_jumps=20, step=False, tie_prob=0.3, end_jump_prob=0.1):
    """Random path with occasional tied jump sizes, jumps at 1 and sloped skeletons."""
    k = int(rng.integers(0, max_jumps + 1))
    t = np.unique(rng.random(k))
    t = t[t > 0]
    if t.size and rng.random() < end_jump_prob:
        t[-1] = 1.0
    if rng.random() < tie_prob:
        s = rng.choice([-2.0, -1.0, -0.5, 0.5, 1.0, 2.0], t.size)
    else:
        s = rng.normal(size=t.size) * rng.choice([0.1, 1.0, 10.0])
    start = float(rng.normal()) if rng.random() < 0.5 else 0.0
    if step:
        return CadlagPath.from_jumps(t, s, start=start)
    kk = int(rng.integers(0, 4))
    kt = np.concatenate([[0.0], np.sort(rng.random(kk)), [1.0]])
    if np.any(np.diff(kt) <= 0):
        kt = np.array([0.0, 1.0])
    kv = rng.normal(size=kt.size)
    jt, js = t, s
    keep = js != 0
    return CadlagPath(kt, kv, jt[keep], js[keep])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@st.composite
def paths(draw, max_jumps=12, step=False):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    return random_path(np.random.default_rng(seed), max_jumps=max_jumps, step=step)


@st.composite
def step_paths(draw, max_jumps=5):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    return random_path(np.random.default_rng(seed), max_jumps=max_jumps, step=True)


@st.composite
def time_changes(draw):
    from trimlevy.paths import TimeChange
    from oracles import random_time_change

    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    while True:
        uv = random_time_change(rng)
        if uv is not None:
            return TimeChange(*uv)
