import numpy as np
import pytest

from src.config import SedimentConfig, StreamflowConfig
from src.domain.problem import CostSpec, DepletionPenalty, Grid, Problem


@pytest.fixture(scope='session')
def model():
    """Identified streamflow model in hours."""
    return StreamflowConfig().model()


@pytest.fixture(scope='session')
def physics():
    return SedimentConfig().physics()


@pytest.fixture(scope='session')
def transport():
    """Reduced transport law at Qbar = 200 m3/s, in m3 per hour."""
    return SedimentConfig().transport()


@pytest.fixture
def problem_factory(model, transport):
    def make(
        n_q=6, n_s=5, l_bar=2, psi=0.0, o=20.0, c0=20.0, c1=60.0, w=48.0,
        penalty='indicator', kappa=0.0, switching=True, volume_unit=400.0,
        source=None, model_override=None, top_boundary='reflect',
    ):
        grid = Grid(
            n_q=n_q, n_s=n_s, q_bar=transport.q_bar, s_bar=400.0, l_bar=l_bar,
            top_boundary=top_boundary,
        )
        costs = CostSpec(
            c0=c0, c1=c1, o=o, psi=psi, w=w,
            penalty=DepletionPenalty(penalty, kappa), volume_unit=volume_unit,
        )
        return Problem(
            model=model_override or model, transport=transport, costs=costs, grid=grid,
            switching=switching, source=source,
        )
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
