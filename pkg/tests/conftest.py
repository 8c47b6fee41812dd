import numpy as np
import pytest

from fungrasp.assets import default_demo_path, default_hand_path, default_styles_path
from fungrasp.demo import load_demo
from fungrasp.hand import load_hand_spec, load_styles
from fungrasp.objects import toy_suite
from fungrasp.training import Assets


@pytest.fixture(scope="session")
def spec():
    return load_hand_spec(default_hand_path())


@pytest.fixture(scope="session")
def styles(spec):
    return load_styles(default_styles_path(), spec)


@pytest.fixture(scope="session")
def demo(spec):
    return load_demo(default_demo_path(), spec)


@pytest.fixture(scope="session")
def shadow_spec():
    return load_hand_spec(default_hand_path("shadow_like"))


@pytest.fixture(scope="session")
def objects():
    return toy_suite()


@pytest.fixture(scope="session")
def assets(spec, styles, demo, objects):
    return Assets.build(spec, styles, demo, list(objects.values()))


@pytest.fixture(scope="session")
def box_assets(spec, styles, demo, objects):
    """Single-object asset bundle where identity replay always succeeds."""
    return Assets.build(spec, styles, demo, [objects["box"]])


def random_pose(rng):
    from fungrasp.geometry import Pose, axis_angle_to_quat

    v = rng.normal(size=3)
    v = v / np.linalg.norm(v) * rng.uniform(0, 3.0)
    return Pose(t=rng.normal(size=3), r=axis_angle_to_quat(v))
