"""Semantic annotation of virtualized wireless sensor network data.

Raw readings are annotated against a distributed base ontology by
annotation agents, delivered to a fire-monitoring application that reasons
over them, and the whole pipeline is measured on a deterministic
discrete-event simulator.
"""

from __future__ import annotations

from .errors import SemWSNError
from .model import Deployment, NodeClass, Quantity, RawReading, SensorNode, VirtualSensor
from .store import TripleStore
from .terms import IRI, Literal, Triple, Variable

__version__ = "0.1.0"

__all__ = [
    "Deployment",
    "IRI",
    "Literal",
    "NodeClass",
    "Quantity",
    "RawReading",
    "SemWSNError",
    "SensorNode",
    "Triple",
    "TripleStore",
    "Variable",
    "VirtualSensor",
    "__version__",
]
