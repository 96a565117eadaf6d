import numpy as np
import pytest

from s2l import TrajectoryStore


def make_store(n=12, t=4, seed=0, sources=("alpha",)):
    """Random valid store; sources cycle through the given tags."""
    rng = np.random.default_rng(seed)
    losses = rng.uniform(0.0, 5.0, size=(n, t)).astype(np.float32)
    return TrajectoryStore(
        ids=[f"ex{i:04d}" for i in range(n)],
        sources=[sources[i % len(sources)] for i in range(n)],
        losses=losses,
        checkpoint_steps=[500 * (j + 1) for j in range(t)],
    )


@pytest.fixture
def store():
    return make_store()


@pytest.fixture
def mixed_store():
    return make_store(n=30, t=5, seed=3, sources=("web", "math", "code"))
