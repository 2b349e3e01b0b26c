import pytest

from segkernel.profile import solve_profile


@pytest.fixture(scope="session")
def table():
    """Default profile table shared across the whole run."""
    return solve_profile(T=12.0, N=4801, newton_tol=1e-10)
