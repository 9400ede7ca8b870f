import numpy as np
import pytest

from jointopt.engine import GraphSettings, RunConfig, RunMode
from jointopt.problem import LearningSpec, random_box_family, random_learning, random_problem

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def small_config(m=3, n=2, p=2, seed=0, **kw):
    """A cheap random instance for engine tests."""
    prob = random_problem(m, n, p, seed=seed)
    sets = random_box_family(m, n, seed=seed)
    learn = random_learning(p, seed=seed)
    kw.setdefault("iterations", 50)
    kw.setdefault("stride", 10)
    return RunConfig(prob, sets, learn, **kw)


def dyadic_learning(p=2):
    """Learning metric whose minimiser is exactly representable, so the
    learning gradient vanishes bit-exactly there."""
    theta_star = np.array([0.5, -0.25, 0.75][:p])
    C = 2.0 * np.eye(p)
    return LearningSpec(C, C @ theta_star), theta_star


def sampled_vi_violation(prob, fam, ref, rng, count=10_000):
    """Largest violation of the first-order optimality condition at the
    reference point over uniform samples of the (box) feasible set."""
    box = fam.intersection_box
    ys = rng.uniform(box.lower, box.upper, size=(count, prob.n))
    g = prob.grad(ref.x_star, ref.theta_star)
    return float(-((ys - ref.x_star) @ g).min())
