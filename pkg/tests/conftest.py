import os

import pytest
from hypothesis import settings

from erlclass.config import RunConfig, SynthConfig

settings.register_profile("default", deadline=None)
settings.register_profile("ci", deadline=None, max_examples=30)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# a small city: enough ERLs of each class for a stratified split, ten days
# so every planted site can pass the ten-day activity filter
SMALL_SYNTH = SynthConfig(seed=7, n_er=20, n_mr=6, n_pm=8, n_unlabeled=3, n_days=10, city_radius=25000.0)


@pytest.fixture(scope="session")
def small_synth():
    from erlclass.synth import generate

    return generate(SMALL_SYNTH)


@pytest.fixture(scope="session")
def small_config():
    from erlclass.config import GbdtConfig, MlpConfig, ModelsConfig, RfConfig

    models = ModelsConfig(
        mlp=MlpConfig(hidden=(16,), max_epochs=40),
        gbdt=GbdtConfig(n_rounds=10, learning_rate=0.3),
        rf=RfConfig(n_trees=20),
    )
    return RunConfig(seed=3, synth=SMALL_SYNTH, models=models, repeats=2)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
