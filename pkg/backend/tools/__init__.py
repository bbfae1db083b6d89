# backend/tools/__init__.py
"""
One tool function per subcommand. Each takes (config, out_dir, manifest),
writes its outputs and returns {"outputs": [...], "summary": {...}}.
"""

from .advect import run_advect
from .horseshoe import run_density, run_horseshoe
from .lyapunov import run_lyapunov
from .simulate import run_ou_check, run_simulate

__all__ = [
    'run_simulate',
    'run_ou_check',
    'run_advect',
    'run_lyapunov',
    'run_horseshoe',
    'run_density',
]
