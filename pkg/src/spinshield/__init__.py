"""spinshield: coherence protection in planar buffer-spin networks.

Simulation engine and CLI for searching buffer-network geometries that
best preserve the quantum coherence of a central spin under local thermal
or dephasing noise.
"""

__version__ = "0.1.0"

from .model import ClusterSpec, NoiseSpec  # noqa: F401
from .topology import BufferGraph, extreme_geometry  # noqa: F401
from .dynamics import IntegratorConfig, TimeSeries, evolve  # noqa: F401
