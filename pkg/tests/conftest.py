import pytest

from wgmcqed.fem.mesh import ResonatorGeometry
from wgmcqed.fem.solver import SolverSettings, find_fundamental, solve_eigenmodes
from wgmcqed.physics import fused_silica_index
from wgmcqed.sphere import nearest_resonance

LAMBDA_UM = 0.852359
N_SILICA = fused_silica_index(LAMBDA_UM * 1e-6)


@pytest.fixture(scope="session")
def small_sphere():
    """D = 5 um silica sphere, TM fundamental nearest 852 nm: (analytic, FEM mode, settings)."""
    res = nearest_resonance(N_SILICA, 2.5, "TM", LAMBDA_UM)
    settings = SolverSettings()
    modes, mesh = solve_eigenmodes(ResonatorGeometry(5.0, 5.0), res.l, "even", res.k_re, settings)
    return res, find_fundamental(modes, "TM"), settings


@pytest.fixture(scope="session")
def cache_root(tmp_path_factory):
    return tmp_path_factory.mktemp("mode-cache")


@pytest.fixture(scope="session")
def solve(cache_root):
    """Memoised end-to-end pipeline for one (D, d, pol) point, sharing a session cache."""
    from wgmcqed.sweep.cache import ModeCache
    from wgmcqed.sweep.pipeline import PipelineSettings, WaterModel, solve_point

    cache = ModeCache(cache_root)
    memo = {}

    def run(D, d, pol="TM", water=False):
        key = (D, d, pol, water)
        if key not in memo:
            settings = PipelineSettings(water=WaterModel(enabled=water))
            memo[key] = solve_point(ResonatorGeometry(D, d), pol, settings=settings, cache=cache)
        return memo[key]

    return run


# one pass/fail line per acceptance criterion, printed after the run
ACCEPTANCE = []


@pytest.fixture
def criterion():
    def record(number, passed, detail):
        ACCEPTANCE.append((number, bool(passed), detail))
        print(f"CRITERION {number}: {'PASS' if passed else 'FAIL'} | {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE, key=lambda x: x[0]):
        terminalreporter.write_line(f"CRITERION {number}: {'PASS' if passed else 'FAIL'} | {detail}")
