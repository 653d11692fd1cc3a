"""Nodes, virtual sensors and raw readings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import FrozenSet

from .errors import InvalidModel, UnknownQuantity, UnknownUnit


class NodeClass(str, Enum):
    TYPE_A = "TypeA"
    TYPE_B = "TypeB"
    GTO = "GTO"

    @classmethod
    def parse(cls, text: str) -> "NodeClass":
        for member in cls:
            if member.value.lower() == text.strip().lower():
                return member
        raise InvalidModel(f"unknown node class {text!r}")

    @property
    def can_host_agents(self) -> bool:
        return self is not NodeClass.TYPE_A


class Quantity(str, Enum):
    TEMPERATURE = "Temperature"
    HUMIDITY = "Humidity"
    LIGHT = "Light"
    CO2 = "CO2"

    @classmethod
    def parse(cls, text: str) -> "Quantity":
        for member in cls:
            if member.value.lower() == text.strip().lower():
                return member
        raise UnknownQuantity(text)

    @property
    def unit(self) -> str:
        return CANONICAL_UNITS[self]

    @property
    def slug(self) -> str:
        return self.value.lower()


CANONICAL_UNITS = {
    Quantity.TEMPERATURE: "Cel",
    Quantity.HUMIDITY: "%RH",
    Quantity.CO2: "ppm",
    Quantity.LIGHT: "lx",
}
UNIT_QUANTITY = {unit: quantity for quantity, unit in CANONICAL_UNITS.items()}


def quantity_for_unit(unit: str) -> Quantity:
    try:
        return UNIT_QUANTITY[unit]
    except KeyError:
        raise UnknownUnit(unit) from None


def check_position(longitude: float, latitude: float) -> None:
    if not (math.isfinite(longitude) and -180.0 <= longitude <= 180.0):
        raise InvalidModel(f"longitude {longitude} out of range")
    if not (math.isfinite(latitude) and -90.0 <= latitude <= 90.0):
        raise InvalidModel(f"latitude {latitude} out of range")


@dataclass(frozen=True)
class SensorNode:
    id: str
    node_class: NodeClass
    capabilities: FrozenSet[Quantity]
    longitude: float = 0.0
    latitude: float = 0.0
    is_oa: bool = False
    is_aa: bool = False

    def __post_init__(self) -> None:
        if not self.capabilities:
            raise InvalidModel(f"node {self.id} has no capabilities")
        if (self.is_oa or self.is_aa) and not self.node_class.can_host_agents:
            raise InvalidModel(f"Type A node {self.id} cannot host AA/OA roles")
        check_position(self.longitude, self.latitude)


class SensorKind(str, Enum):
    SEMANTIC = "Semantic"
    NON_SEMANTIC = "NonSemantic"


class WireFormat(str, Enum):
    SENML = "SenML"
    SIMPLE_STRING = "SimpleString"


def wire_format_for(node_class: NodeClass) -> WireFormat:
    # GTO-hosted sensors are treated like Type B: they have the resources for SenML
    return WireFormat.SIMPLE_STRING if node_class is NodeClass.TYPE_A else WireFormat.SENML


@dataclass(frozen=True)
class VirtualSensor:
    id: str
    host: str
    quantity: Quantity
    kind: SensorKind = SensorKind.SEMANTIC
    period_ms: int = 1000
    wire_format: WireFormat = WireFormat.SENML

    def __post_init__(self) -> None:
        if self.period_ms <= 0:
            raise InvalidModel("period_ms must be positive")

    def check_host(self, node: SensorNode) -> None:
        if node.id != self.host:
            raise InvalidModel(f"{self.id} is not hosted on {node.id}")
        if self.quantity not in node.capabilities:
            raise InvalidModel(f"host {node.id} cannot sense {self.quantity.value}")
        if self.wire_format is not wire_format_for(node.node_class):
            raise InvalidModel(f"{self.id}: {node.node_class.value} hosts must use {wire_format_for(node.node_class).value}")


@dataclass(frozen=True)
class RawReading:
    source: str
    quantity: Quantity
    value: float
    unit: str
    timestamp_ms: int
    longitude: float = 0.0
    latitude: float = 0.0

    def __post_init__(self) -> None:
        if self.unit != self.quantity.unit:
            raise InvalidModel(f"unit {self.unit!r} is not canonical for {self.quantity.value}")
        if self.timestamp_ms < 0:
            raise InvalidModel("negative timestamp")
        if not math.isfinite(self.value):
            raise InvalidModel("non-finite value")
        if not self.source:
            raise InvalidModel("empty source")
        check_position(self.longitude, self.latitude)

    @property
    def key(self) -> str:
        return f"{self.source}@{self.timestamp_ms}"


@dataclass
class Deployment:
    """Static description of a WSN: nodes and the virtual sensors they host."""

    nodes: list = field(default_factory=list)
    sensors: list = field(default_factory=list)

    def node(self, node_id: str) -> SensorNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise InvalidModel(f"unknown node {node_id}")

    def validate(self) -> None:
        ids = [n.id for n in self.nodes]
        if len(ids) != len(set(ids)):
            raise InvalidModel("duplicate node ids")
        vs_ids = [s.id for s in self.sensors]
        if len(vs_ids) != len(set(vs_ids)):
            raise InvalidModel("duplicate virtual sensor ids")
        for s in self.sensors:
            s.check_host(self.node(s.host))
