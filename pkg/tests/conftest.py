import json
from datetime import datetime, timezone
from pathlib import Path

import pytest

from hcti.ingest import FormatHint, RawDocument
from hcti.model import SourceClass, SourceDescriptor
from hcti.service.config import PlatformConfig
from hcti.service.state import PlatformState
from hcti.util import parse_ts

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def manifest() -> dict:
    return json.loads((FIXTURES / "manifest.json").read_text())


@pytest.fixture
def fetched_at() -> datetime:
    return parse_ts("2026-03-02T00:00:00Z")


def make_source(source_id: str = "test-src",
                source_class: SourceClass = SourceClass.PRESTRUCTURED_FEED
                ) -> SourceDescriptor:
    return SourceDescriptor(source_id, source_class)


def make_doc(name: str, source_id: str = None,
             hint: FormatHint = FormatHint.UNKNOWN) -> RawDocument:
    data = (FIXTURES / name).read_bytes()
    return RawDocument(
        format_hint=hint,
        data=data,
        fetched_from=make_source(source_id or name),
        fetched_at=parse_ts("2026-03-02T00:00:00Z"),
    )


def make_platform(tmp_path: Path, with_fixture_inputs: bool = True,
                  auth_token: str = "") -> PlatformState:
    config = PlatformConfig(
        data_dir=tmp_path / "data",
        org_mapping=FIXTURES / "orgs.map" if with_fixture_inputs else None,
        policy_dir=FIXTURES / "policies" if with_fixture_inputs else None,
        ea_dir=FIXTURES / "ea" if with_fixture_inputs else None,
        auth_token=auth_token,
    )
    config.data_dir.mkdir(parents=True, exist_ok=True)
    config.validate()
    state = PlatformState(config)
    state.replay()
    return state


@pytest.fixture
def platform(tmp_path) -> PlatformState:
    return make_platform(tmp_path)


class FakeStores:
    """Minimal stores facade for risk-engine tests."""

    def __init__(self, observations=(), policy=None, scores=None,
                 vectors=None, graph=None, incident_rate_value=0.0,
                 mention_count_value=0, orgs=("org-1",), sector="healthcare",
                 overrides=None, cap=3.0, weights=None):
        self._observations = list(observations)
        self._policy = policy
        self._scores = scores or {}
        self._vectors = vectors or {}
        self._graph = graph
        self._incident_rate = incident_rate_value
        self._mentions = mention_count_value
        self._orgs = set(orgs)
        self._sector = sector
        self._overrides = overrides or {}
        self._cap = cap
        from hcti.scenarios import IMPACT_WEIGHTS
        self._weights = weights or dict(IMPACT_WEIGHTS)

    def known_org(self, org_id):
        return org_id in self._orgs

    def observations_before(self, org_id, as_of):
        return sorted((o for o in self._observations
                       if o.org_id == org_id and o.observed_at < as_of),
                      key=lambda o: (o.observed_at, o.ip))

    def policy_for(self, org_id):
        return self._policy

    def cvss_score(self, cve_id, as_of):
        return self._scores.get(cve_id)

    def cvss_vector(self, cve_id, as_of):
        return self._vectors.get(cve_id)

    def incident_rate(self, sector, as_of, months=12):
        return self._incident_rate

    def mention_count(self, org_id, sector, as_of, days=30):
        return self._mentions

    def ea_graph(self, org_id):
        return self._graph

    def org_sector(self, org_id):
        return self._sector

    def scenario_overrides(self):
        return self._overrides

    def countermeasure_cap(self):
        return self._cap

    def impact_weights(self):
        return self._weights
