import numpy as np
import pytest

from sidewalksim.episode import EpisodeConfig
from sidewalksim.walkmap import WalkableMap, generate_synthetic_map


@pytest.fixture
def corridor():
    return generate_synthetic_map("corridor", 20.0, 3.0)


@pytest.fixture
def corridor_long():
    return generate_synthetic_map("corridor", 32.0, 3.5)


@pytest.fixture
def big_plane():
    # stand-in for an unbounded walkable world
    half = 100.0
    poly = [[-half, -half], [half, -half], [half, half], [-half, half]]
    return WalkableMap([poly], cell_size=5.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_config(wmap, **kw):
    kw.setdefault("obs_mode", "privileged")
    kw.setdefault("render_bev", False)
    return EpisodeConfig(map=wmap, **kw)
