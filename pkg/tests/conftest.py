import numpy as np
import pytest

from regime_price import (CensoredHistory, MarketParams, PriceGrid, hazard_from_model, three_regime_market,
                          three_regime_model, solve_pde)

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def hand_history():
    """tau = 4 trace: states (1, 3, 1) in file numbering, sojourns 0.5 and 1.2, U = 2.3."""
    return CensoredHistory(np.array([0, 2, 0]), np.array([0.5, 1.2]), 2.3, 4.0)


@pytest.fixture(scope="session")
def model():
    return three_regime_model()


@pytest.fixture(scope="session")
def market():
    return three_regime_market()


@pytest.fixture(scope="session")
def single_market():
    return MarketParams(rates=[0.3], volatilities=[0.2], strike=1.0, maturity=1.0)


@pytest.fixture(scope="session")
def coarse_grid():
    return PriceGrid.from_steps(1.0, 1 / 100, 8.0, 0.02)


@pytest.fixture(scope="session")
def coarse_true_surface(model, market, coarse_grid):
    return solve_pde(market, hazard_from_model(model), coarse_grid)


@pytest.fixture(scope="session")
def fine_grid():
    """The reference grid: delta_t = 1/500, delta_s = 8K/2000 on [0, 8K]."""
    return PriceGrid.from_steps(1.0, 1 / 500, 8.0, 0.004)


@pytest.fixture(scope="session")
def fine_true_surface(model, market, fine_grid):
    return solve_pde(market, hazard_from_model(model), fine_grid)
