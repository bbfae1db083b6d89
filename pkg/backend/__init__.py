# Backend init - Stochastic Navier-Stokes Lagrangian chaos lab
from .config.settings import SCHEME_VERSION, SOFTWARE_VERSION

__all__ = ['SOFTWARE_VERSION', 'SCHEME_VERSION']
