"""Service configuration: TOML file keys with environment overrides.

File keys: listen_addr, data_dir, organisation, allow_live, peers,
profile_path, risk_model_path. Environment: PHX_LISTEN_ADDR, PHX_DATA_DIR,
PHX_ORG, PHX_ALLOW_LIVE, PHX_PEERS, PHX_TOKEN (token comes from the
environment only, never the file).
"""

import os
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib


@dataclass
class ServiceConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8444
    data_dir: str = "./phx-data"
    organisation: str = "phx"
    allow_live: bool = False
    peers: tuple = ()
    profile_path: str = None
    risk_model_path: str = None
    token: str = None
    sse_heartbeat_s: float = 15.0


def _parse_addr(addr: str):
    host, _, port = addr.rpartition(":")
    return host or "127.0.0.1", int(port)


def load_config(path=None, env=None) -> ServiceConfig:
    env = os.environ if env is None else env
    config = ServiceConfig()
    if path is not None:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        if "listen_addr" in data:
            config.listen_host, config.listen_port = _parse_addr(data["listen_addr"])
        config.data_dir = data.get("data_dir", config.data_dir)
        config.organisation = data.get("organisation", config.organisation)
        config.allow_live = bool(data.get("allow_live", config.allow_live))
        config.peers = tuple(data.get("peers", ()))
        config.profile_path = data.get("profile_path", config.profile_path)
        config.risk_model_path = data.get("risk_model_path", config.risk_model_path)

    if env.get("PHX_LISTEN_ADDR"):
        config.listen_host, config.listen_port = _parse_addr(env["PHX_LISTEN_ADDR"])
    if env.get("PHX_DATA_DIR"):
        config.data_dir = env["PHX_DATA_DIR"]
    if env.get("PHX_ORG"):
        config.organisation = env["PHX_ORG"]
    if env.get("PHX_ALLOW_LIVE"):
        config.allow_live = env["PHX_ALLOW_LIVE"].lower() in ("1", "true", "yes")
    if env.get("PHX_PEERS"):
        config.peers = tuple(p for p in env["PHX_PEERS"].split(",") if p)
    if env.get("PHX_TOKEN"):
        config.token = env["PHX_TOKEN"]
    return config
