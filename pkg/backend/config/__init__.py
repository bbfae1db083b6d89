# Config init - Environment settings and run-config parsing
from .parser import RunConfig, load_config, parse_config

__all__ = ['RunConfig', 'load_config', 'parse_config']
