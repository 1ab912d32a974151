import numpy as np
import pytest

from budgetdefer.data import prepare_split
from budgetdefer.experts import TEST, TRAIN, ExpertPanel
from budgetdefer.harness import make_synthetic
from budgetdefer.linear_model import build_hypothesis_pool


class Task:
    """Small realizable 3-class task with a trained routing pool."""

    def __init__(self, n_classes=3, pool_size=8, n_examples=900, seed=0, single=False):
        ds = make_synthetic(n_classes, 5, n_examples, 10.0, seed)
        self.train, self.test = prepare_split(ds, 0.3, seed)
        self.n_classes = n_classes
        self.panel = ExpertPanel.class_oracles(n_classes, seed)
        self.train_costs = self.panel.cost_matrix(self.train.y, TRAIN)
        self.test_costs = self.panel.cost_matrix(self.test.y, TEST)
        self.panel.unbudgeted_queries = 0
        n_dec = 2 * n_classes if single else n_classes
        if single:
            self.pool = build_hypothesis_pool(self.train.X, pool_size, n_dec,
                                              target_rule="random_gaussian", seed=seed)
        else:
            self.pool = build_hypothesis_pool(self.train.X, pool_size, n_dec,
                                              costs=self.train_costs, seed=seed, epochs=100)

    @property
    def test_triple(self):
        return self.test.X, self.test.y, self.test_costs

    def fresh_panel(self, seed=0):
        return ExpertPanel.class_oracles(self.n_classes, seed)


@pytest.fixture(scope="session")
def task():
    return Task()


@pytest.fixture(scope="session")
def single_task():
    return Task(single=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """Collects one summary line per acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, [])

    def add(line):
        lines.append(line)
        print(line)
    return add


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
