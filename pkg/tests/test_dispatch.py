import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from phx.dispatch import (
    DEFAULT_REGISTRY,
    CommandResult,
    DispatchContext,
    SimulationProfile,
    assert_sim_totality,
    default_registry,
)
from phx.errors import NoExecutorError
from phx.model.types import AgentDefinition, Command, TargetDefinition
from phx.rng import substream

FIREWALL = TargetDefinition(
    id="target--00000000-0000-4000-8000-000000000001",
    target_type="firewall", name="edge-fw",
)
ENGINE_AGENT = AgentDefinition(
    id="agent--00000000-0000-4000-8000-000000000001",
    agent_type="engine-internal", name="engine",
)


def ctx(mode="dry-run", profile=None, **kwargs):
    return DispatchContext(mode=mode, profile=profile or SimulationProfile(), **kwargs)


def dispatch(command, mode="dry-run", profile=None, targets=(), agent=ENGINE_AGENT,
             seed=1, key="step", content=None):
    return DEFAULT_REGISTRY.dispatch(
        command, agent, list(targets), content if content is not None else command.content,
        ctx(mode, profile), substream(seed, key), 0.0,
    )


def profile_from(obj):
    return SimulationProfile.from_json_obj(obj)


class TestExecutors:
    def test_noop_succeeds_with_zero_duration(self):
        result = dispatch(Command("noop", ""), mode="dry-run")
        assert result.ok and result.duration_ms == 0
        result = dispatch(Command("noop", ""), mode="range")
        assert result.ok and result.duration_ms == 0

    def test_degenerate_profile_fixed_latency(self):
        profile = profile_from({
            "target_types": {"firewall": {
                "success_probability": 1.0,
                "latency": {"distribution": "fixed", "params": {"ms": 100}},
            }},
        })
        for seed in (0, 1, 99999):
            result = dispatch(Command("shell-sim", "block"), profile=profile,
                              targets=[FIREWALL], seed=seed)
            assert result.ok
            assert result.duration_ms == 100

    def test_success_rate_tracks_probability_and_replays(self):
        profile = profile_from({"defaults": {
            "success_probability": 0.5,
            "latency": {"distribution": "fixed", "params": {"ms": 1}},
        }})
        def draw(run):
            outcomes = []
            for i in range(1000):
                result = dispatch(Command("shell-sim", "x"), profile=profile,
                                  seed=77, key=f"step-{i}")
                outcomes.append(result.ok)
            return outcomes

        first = draw(0)
        rate = sum(first) / len(first)
        assert abs(rate - 0.5) <= 0.05
        assert draw(1) == first  # identical sequence on re-run

    def test_uniform_latency_within_bounds_and_deterministic(self):
        profile = profile_from({"defaults": {
            "success_probability": 1.0,
            "latency": {"distribution": "uniform", "params": {"low": 10, "high": 20}},
        }})
        a = dispatch(Command("shell-sim", "x"), profile=profile, seed=5)
        b = dispatch(Command("shell-sim", "x"), profile=profile, seed=5)
        assert a.duration_ms == b.duration_ms
        assert 10 <= a.duration_ms <= 20

    def test_command_override_beats_target_entry(self):
        profile = profile_from({
            "target_types": {"firewall": {
                "latency": {"distribution": "fixed", "params": {"ms": 100}}}},
            "command_overrides": {"shell-sim": {
                "latency": {"distribution": "fixed", "params": {"ms": 7}}}},
        })
        result = dispatch(Command("shell-sim", "x"), profile=profile, targets=[FIREWALL])
        assert result.duration_ms == 7

    def test_simulated_outputs_cover_expected(self):
        result = dispatch(Command("shell-sim", "x", ("__out__",)))
        assert result.outputs["__out__"] == "simulated:__out__"

    def test_notification_executor_emits_bundle_id(self):
        result = dispatch(Command("exchange", "subject text", ("__ticket__",)),
                          content="subject text")
        assert result.ok and result.duration_ms == 1
        assert result.outputs["__bundle_id__"].startswith("bundle--")
        assert result.outputs["__ticket__"] == result.outputs["__bundle_id__"]

    def test_sim_notification_is_deterministic(self):
        a = dispatch(Command("notification", "s"), seed=3, key="k")
        b = dispatch(Command("notification", "s"), seed=3, key="k")
        assert a.outputs == b.outputs


class TestRegistry:
    def test_sim_matrix_is_total(self):
        assert_sim_totality(DEFAULT_REGISTRY)

    def test_unknown_combination_raises(self):
        with pytest.raises(NoExecutorError) as err:
            DEFAULT_REGISTRY.lookup("shell-sim", "engine-internal", "live")
        assert err.value.mode == "live"

    def test_live_http_executor_never_used_in_sim_modes(self):
        registry = default_registry()
        calls = []

        def sentinel(command, agent, targets, content, context, stream, now):
            calls.append(context.mode)
            return CommandResult("success", {}, 0, "sentinel")

        registry.register("http-api", "http-endpoint", "live", sentinel)
        agent = AgentDefinition(
            id="agent--00000000-0000-4000-8000-000000000002",
            agent_type="http-endpoint", name="api", address="http://127.0.0.1:1/x",
        )
        for mode in ("dry-run", "range"):
            result = registry.dispatch(
                Command("http-api", "ping"), agent, [], "ping",
                ctx(mode), substream(1, "s"), 0.0,
            )
            assert result.ok  # simulated, not the sentinel
        assert calls == []


class _PeerHandler(BaseHTTPRequestHandler):
    received = []

    def do_POST(self):
        length = int(self.headers.get("content-length", 0))
        type(self).received.append(self.rfile.read(length))
        self.send_response(200)
        self.end_headers()

    def log_message(self, *args):
        pass


class TestHttpExecutor:
    @pytest.fixture
    def http_server(self):
        server = HTTPServer(("127.0.0.1", 0), _PeerHandler)
        _PeerHandler.received = []
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        yield f"http://127.0.0.1:{server.server_port}"
        server.shutdown()

    def test_live_post_and_response_capture(self, http_server):
        agent = AgentDefinition(
            id="agent--00000000-0000-4000-8000-000000000003",
            agent_type="http-endpoint", name="api", address=http_server + "/act",
        )
        result = DEFAULT_REGISTRY.dispatch(
            Command("http-api", "block ip 10.0.0.9"), agent, [],
            "block ip 10.0.0.9", ctx("live"), substream(0, "s"), 0.0,
        )
        assert result.ok
        assert "__http_response__" in result.outputs
        assert _PeerHandler.received == [b"block ip 10.0.0.9"]

    def test_transport_error_is_retryable_failure(self):
        agent = AgentDefinition(
            id="agent--00000000-0000-4000-8000-000000000004",
            agent_type="http-endpoint", name="api", address="http://127.0.0.1:9/unreachable",
        )
        result = DEFAULT_REGISTRY.dispatch(
            Command("http-api", "x"), agent, [], "x", ctx("live"), substream(0, "s"), 0.0,
        )
        assert not result.ok
        assert "transport-error" in result.detail


class TestProfileFormat:
    def test_load_fixture_profile(self, fixtures_dir):
        profile = SimulationProfile.load(fixtures_dir / "default.profile.json")
        prob, latency = profile.resolve("shell-sim", "firewall")
        assert prob == 1.0
        assert dict(latency.params)["ms"] == 100

    def test_profile_hash_stable(self, fixed_profile):
        assert fixed_profile.profile_hash() == SimulationProfile.from_json_obj(
            fixed_profile.to_json_obj()).profile_hash()

    def test_bad_probability_rejected(self):
        with pytest.raises(Exception):
            profile_from({"defaults": {"success_probability": 1.5}})

    def test_bad_distribution_rejected(self):
        with pytest.raises(Exception):
            profile_from({"defaults": {"latency": {"distribution": "pareto", "params": {}}}})
