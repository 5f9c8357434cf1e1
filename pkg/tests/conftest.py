import math
import sys

from hypothesis import HealthCheck, settings, strategies as st

from fastkpp import DiffusionParams

settings.register_profile("lab", deadline=None, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")


@st.composite
def fast_good(draw, p_lo=1.2, p_hi=3.5, n_max=3):
    """(m, p, N) with 0 < gamma_hat < min(1, p/N), kept off both edges."""
    N = draw(st.integers(1, n_max))
    p = draw(st.floats(p_lo, p_hi))
    frac = draw(st.floats(0.05, 0.95))
    gh = frac * min(1.0, p / N)
    m = (1.0 - gh) / (p - 1.0)
    return DiffusionParams(m, p, N)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
