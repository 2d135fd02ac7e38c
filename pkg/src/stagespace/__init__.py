"""Versioned N-dimensional region staging over pluggable storage tiers.

Writer and reader processes share array regions through staging server
processes. Regions are addressed associatively by (variable, version,
bounding box); servers persist chunk payloads in a heap arena or a
memory-mapped file backed by a block device, and replicate metadata to
their peers. The `bench` subpackage drives device micro-benchmarks and
strong/weak scaling runs against a live cluster.
"""

from stagespace.errors import (
    CapacityError,
    ConfigError,
    LifecycleError,
    ProtocolError,
    RemoteError,
    StagingError,
)
from stagespace.geometry import NDBox, RegionBuffer

__version__ = "0.1.0"

__all__ = [
    "NDBox",
    "RegionBuffer",
    "StagingError",
    "CapacityError",
    "LifecycleError",
    "ProtocolError",
    "RemoteError",
    "ConfigError",
    "__version__",
]
