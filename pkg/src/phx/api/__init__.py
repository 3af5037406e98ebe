"""HTTP service and persistence."""

from .app import EventBus, Service, create_app
from .config import ServiceConfig, load_config
from .store import Store

__all__ = ["EventBus", "Service", "ServiceConfig", "Store", "create_app", "load_config"]
