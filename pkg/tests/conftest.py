import shutil
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from mediate.ontology import load_ontology
from mediate.project import packaged_data
from mediate.reconcile import load_rule_base

settings.register_profile(
    "ci", derandomize=True, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")

SCENARIO_FILES = (
    "project.yaml", "model.yaml", "services.yaml",
    "events-fault.yaml", "events-withdrawal.yaml", "events-objective.yaml",
)


@pytest.fixture(scope="session")
def seed_ontology():
    return load_ontology(packaged_data("ontology.yaml"))


@pytest.fixture(scope="session")
def seed_rules():
    return load_rule_base(packaged_data("transforms.yaml"))


@pytest.fixture()
def scenario_dir(tmp_path) -> Path:
    src = packaged_data("scenario")
    for name in SCENARIO_FILES:
        shutil.copy(src / name, tmp_path / name)
    return tmp_path
