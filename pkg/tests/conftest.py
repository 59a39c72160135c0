import numpy as np
import pytest

from nschsim.grid import Grid


@pytest.fixture
def grid():
    return Grid(32, 32)


@pytest.fixture
def grid_rect():
    """Non-square grid with distinct spacings, to catch axis mixups."""
    return Grid(24, 40, 1.0, 1.6)


def random_simplex_field(rng, n, nx, ny, margin=0.05):
    """Random strictly interior composition field via softmax of noise."""
    logits = rng.standard_normal((n, nx, ny))
    phi = np.exp(logits)
    phi /= np.sum(phi, axis=0)
    # pull toward the barycenter so every component clears the margin
    phi = (1.0 - n * margin) * phi + margin
    return phi
