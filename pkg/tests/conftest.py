import pytest

from ecdss.model import DataClass, PowerModel, ServiceFamily, SimControls, SystemConfig, validate

NO_IDLE_COST = PowerModel(d_l=0.0, w_l=0.0)


def one_class(n=1, k=1, lam=0.5, mu=1.0, l=1.0, r=None, **kw):
    return SystemConfig(n=n, mu=mu, classes=(DataClass(1, k, l, lam, r=r),), **kw)


def two_class(k2=5, policy="fcfs", mu=1 / 6, power=NO_IDLE_COST, sim=SimControls(), **kw):
    classes = (DataClass(1, 5, 1.0, 0.15), DataClass(2, k2, 1.0, 0.5))
    return validate(SystemConfig(n=10, mu=mu, classes=classes, policy=policy, power=power, sim=sim, **kw))


def deterministic(n=1, k=1, mu=1.0, power=NO_IDLE_COST, **kw):
    return one_class(n=n, k=k, mu=mu, service=ServiceFamily("deterministic"), power=power, **kw)


@pytest.fixture
def default_two_class():
    return two_class(power=PowerModel())


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
