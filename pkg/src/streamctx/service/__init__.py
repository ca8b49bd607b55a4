from .app import PROMPT_VERSION, ServiceConfig, create_app

__all__ = ["PROMPT_VERSION", "ServiceConfig", "create_app"]
