import pytest

from adavboost.model import ModelConfig, build_model

from acceptance_log import LINES as ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def config():
    return ModelConfig()


@pytest.fixture(scope="session")
def weights(config):
    return build_model(config)


@pytest.fixture(scope="session")
def small_weights():
    return build_model(ModelConfig(n_layers=2, hidden_dim=64, n_heads=2, max_positions=40))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
