# Storage init - Manifest and output formats
from .formats import CheckpointWriter, read_checkpoints, read_csv, read_points, write_csv, write_json
from .manifest import RunManifest, load_manifest

__all__ = [
    'CheckpointWriter', 'read_checkpoints', 'read_csv', 'read_points', 'write_csv',
    'write_json', 'RunManifest', 'load_manifest',
]
