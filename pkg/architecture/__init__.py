# Architecture module: run configuration layering

from .config_management import RunConfig, format_value

__all__ = [
    "RunConfig",
    "format_value",
]
