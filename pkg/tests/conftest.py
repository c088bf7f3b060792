import numpy as np
import pytest

from debit.model import SystemParams


def unit_params(K=2, P=1.0, peak=4.0, relay=10.0, noise=1.0, eta=1.0, **kw):
    """Small round-number network for hand-checked formulas."""
    base = dict(num_users=K, user_power=P, relay_power=relay, peak_power=peak,
                antenna_noise=noise, conversion_noise=noise, relay_noise=noise,
                user_noise=noise, efficiency=eta, channel_gain=1.0)
    base.update(kw)
    return SystemParams(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# pass/fail lines from the acceptance suite, repeated at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
