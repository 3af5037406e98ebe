import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent.parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def minimal_playbook():
    from phx.model import parse_playbook

    return parse_playbook((FIXTURES / "minimal.rp.json").read_bytes())


@pytest.fixture
def restore_playbook():
    from phx.model import parse_playbook

    return parse_playbook((FIXTURES / "restore.rp.json").read_bytes())


@pytest.fixture
def meter_playbook():
    from phx.model import parse_playbook

    return parse_playbook((FIXTURES / "meter-restore.rp.json").read_bytes())


@pytest.fixture
def meter_fast_playbook():
    from phx.model import parse_playbook

    return parse_playbook((FIXTURES / "meter-restore-fast.rp.json").read_bytes())


@pytest.fixture
def ddos_scenario():
    from phx.cyberrange import Scenario

    return Scenario.load(FIXTURES / "ddos-meter.scenario.json")


@pytest.fixture
def fixed_profile():
    from phx.dispatch import SimulationProfile

    return SimulationProfile.load(FIXTURES / "default.profile.json")


@pytest.fixture
def oes_risk_model():
    from phx.risk import load_risk_model

    return load_risk_model(FIXTURES / "oes-risk.model.json")


@pytest.fixture
def fixture_alerts():
    from phx.risk import AlertInput

    raw = json.loads((FIXTURES / "alerts.json").read_text())
    return [AlertInput.from_json_obj(a) for a in raw]
