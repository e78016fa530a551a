import numpy as np
import pytest

from se3vf.dynamics import ReferenceScenario, simulate_truth
from se3vf.measurement import Scene, normalized_weights, reference_directions


@pytest.fixture(scope="session")
def scenario():
    return ReferenceScenario()


@pytest.fixture(scope="session")
def scene():
    return Scene.reference()


@pytest.fixture(scope="session")
def ref_dirs(scene):
    d = reference_directions(scene)
    return d, normalized_weights(d)


@pytest.fixture(scope="session")
def truth_full(scenario):
    """The reference 60 s flight at h = 0.01."""
    return simulate_truth(scenario.initial_state(), scenario.wrench, scenario.body, 0.01, 6000)


@pytest.fixture(scope="session")
def truth_short(scenario):
    return simulate_truth(scenario.initial_state(), scenario.wrench, scenario.body, 0.01, 500)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_rotations(rng, n, max_angle=np.pi):
    from se3vf.liegroup import exp_so3

    axis = rng.normal(size=(n, 3))
    axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
    return exp_so3(axis * rng.uniform(0, max_angle, size=(n, 1)))


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdict lines, which output capture would otherwise hide."""
    import sys

    module = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        passed, detail = results[n]
        terminalreporter.write_line(f"CRITERION {n}: {'PASS' if passed else 'FAIL'} | {detail}")
