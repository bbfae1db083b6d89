# Graph init - Exports the subcommand dispatcher
from .workflow import SUBCOMMANDS, run_pipeline

__all__ = ['SUBCOMMANDS', 'run_pipeline']
