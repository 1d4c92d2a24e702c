"""SELECT filtering and keyed PARTITION instancing.

SELECT drops tuples whose key attribute differs from the declared literal
before any state changes.  PARTITION routes each tuple to an independent
engine instance per distinct key, creating instances on first sight; instances
share nothing, so applying a tuple for one key can never move a cell of
another.
"""

from __future__ import annotations

from sheetstream.engine import ChangeSet, EngineInstance, build
from sheetstream.model import Diagnostic, SheetModel, StreamDecl, partition_diagnostics


class RoutingError(ValueError):
    pass


def normalize_key(v: object) -> str | float:
    """Numbers compare by value, text case-sensitively."""
    if isinstance(v, bool):
        raise RoutingError(f"partition keys must be text or number, got {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        return v
    raise RoutingError(f"partition keys must be text or number, got {v!r}")


def admit(stream: StreamDecl, values: list) -> bool:
    """SELECT rule: no clause admits everything; otherwise exact equality."""
    sel = stream.select
    if sel is None:
        return True
    v = values[stream.attr_index(sel.attr)]
    if isinstance(sel.value, str):
        return isinstance(v, str) and v == sel.value
    return not isinstance(v, (str, bool)) and float(v) == sel.value


def check_keys(model: SheetModel) -> list[Diagnostic]:
    """Key agreement: every stream partitions by one common attribute type."""
    return partition_diagnostics(model)


class PartitionManager:
    """One engine instance per key, created on first sight, capped at max_partitions."""

    def __init__(self, model: SheetModel, max_partitions: int = 10_000):
        if not model.partitioned:
            raise RoutingError("model declares no partition_by; build a single instance instead")
        diags = check_keys(model)
        if diags:
            raise RoutingError("; ".join(str(d) for d in diags))
        self.model = model
        self.max_partitions = max_partitions
        self.instances: dict[str | float, EngineInstance] = {}
        self.creation_order: list[str | float] = []
        self._key_index = {s.name: s.attr_index(s.partition_by) for s in model.streams}

    def instance_for(self, key: str | float) -> EngineInstance:
        inst = self.instances.get(key)
        if inst is None:
            if len(self.instances) >= self.max_partitions:
                raise RoutingError(
                    f"partition limit reached: {len(self.instances)} keys exist, "
                    f"max_partitions={self.max_partitions}"
                )
            inst = build(self.model)
            self.instances[key] = inst
            self.creation_order.append(key)
        return inst

    def route(
        self, stream_name: str, values: list, ts, record_changes: bool = True
    ) -> tuple[str | float, ChangeSet]:
        """Apply the tuple to exactly the instance for its key (creating it if new)."""
        key = normalize_key(values[self._key_index[stream_name]])
        inst = self.instance_for(key)
        return key, inst.apply_tuple(stream_name, values, ts, record_changes=record_changes)
