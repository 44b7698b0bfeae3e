"""Typed partial graphs with four-valued element truth and refinement deltas.

Element truth follows a strict refinement order: POSSIBLE may be refined to
CERTAIN or ABSENT; CERTAIN and ABSENT admit no further change except to
ERROR; ERROR absorbs everything. Absent elements are not stored, so absence
is simply non-membership and ``truth_of`` is total.

Models are immutable values: ``apply_delta`` returns a new model, which lets
the decoder evaluate tentative refinements for many candidate tokens from
one committed model without copying anything by hand.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import NamedTuple, Union

from .metamodel import Metamodel


class FourValued(enum.Enum):
    CERTAIN = "certain"
    POSSIBLE = "possible"
    ABSENT = "absent"
    ERROR = "error"


CERTAIN = FourValued.CERTAIN
POSSIBLE = FourValued.POSSIBLE
ABSENT = FourValued.ABSENT
ERROR = FourValued.ERROR


class ModelError(ValueError):
    pass


class UnknownElementError(ModelError):
    pass


EdgeKey = tuple[str, str, str]  # (edge type, source id, target id)


@dataclass(frozen=True)
class AddNode:
    node_id: str
    type: str
    truth: FourValued = POSSIBLE
    attrs: tuple[tuple[str, object], ...] = ()


@dataclass(frozen=True)
class AddEdge:
    edge_type: str
    src: str
    dst: str
    truth: FourValued = POSSIBLE


@dataclass(frozen=True)
class RefineNode:
    node_id: str
    truth: FourValued


@dataclass(frozen=True)
class RefineEdge:
    key: EdgeKey
    truth: FourValued


@dataclass(frozen=True)
class SetAttribute:
    node_id: str
    slot: str
    value: object


DeltaOp = Union[AddNode, AddEdge, RefineNode, RefineEdge, SetAttribute]
ModelDelta = tuple[DeltaOp, ...]

_vid_counter = itertools.count(1)


class _Node(NamedTuple):
    type: str
    attrs: dict
    truth: FourValued


class PartialModel:
    """Immutable typed graph; nodes keyed by id, edges by (type, src, dst)."""

    __slots__ = ("metamodel", "nodes", "edges", "vid")

    def __init__(self, metamodel: Metamodel, nodes: dict[str, _Node], edges: dict[EdgeKey, FourValued]):
        self.metamodel = metamodel
        self.nodes = nodes
        self.edges = edges
        self.vid = next(_vid_counter)  # identity token for per-model memoization

    def node_ids(self) -> list[str]:
        return list(self.nodes.keys())

    def attr(self, node_id: str, slot: str):
        node = self.nodes.get(node_id)
        return None if node is None else node.attrs.get(slot)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PartialModel):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges

    def __hash__(self):
        raise TypeError("PartialModel is not hashable")

    def __repr__(self) -> str:
        return f"<PartialModel nodes={len(self.nodes)} edges={len(self.edges)}>"


def empty_model(metamodel: Metamodel) -> PartialModel:
    return PartialModel(metamodel, {}, {})


def truth_of(pm: PartialModel, ref: Union[str, EdgeKey]) -> FourValued:
    """Stored truth of a node id or edge key; ABSENT when not stored."""
    if isinstance(ref, tuple):
        return pm.edges.get(ref, ABSENT)
    node = pm.nodes.get(ref)
    return ABSENT if node is None else node.truth


def has_error(pm: PartialModel) -> bool:
    return any(n.truth is ERROR for n in pm.nodes.values()) or any(
        t is ERROR for t in pm.edges.values()
    )


def _check_attr(m: Metamodel, type_name: str, slot: str, value) -> None:
    ntype = m.node_types[type_name]
    decl = ntype.attributes.get(slot)
    if decl is None:
        raise ModelError(f"node type {type_name} has no attribute slot {slot!r}")
    if not decl.accepts(value):
        raise ModelError(f"attribute {slot}={value!r} outside domain for {type_name}")


def _refine(old: FourValued, new: FourValued) -> FourValued:
    """Resulting truth of applying a refinement; illegal transitions yield ERROR."""
    if old is ERROR:
        return ERROR
    if new is ERROR:
        return ERROR
    if old is new:
        return old
    if old is POSSIBLE:
        return new  # CERTAIN or ABSENT
    return ERROR  # CERTAIN -> POSSIBLE/ABSENT and anything equally contradictory


def _certain_out_degree(edges: dict[EdgeKey, FourValued], edge_type: str, src: str) -> int:
    return sum(
        1 for (et, s, _d), t in edges.items() if et == edge_type and s == src and t is CERTAIN
    )


def apply_delta(pm: PartialModel, delta) -> PartialModel:
    """Apply refinement steps in order, returning a new model.

    Conflicting refinements (re-adding an element, demoting a certain one,
    rewriting a set attribute) mark the element ERROR rather than raising;
    refining elements that were never stored raises ``UnknownElementError``.
    Refining to ABSENT removes the element, which for nodes also drops their
    possible edges; a node with certain edges cannot vanish and turns ERROR.
    """
    if not delta:
        return pm
    m = pm.metamodel
    nodes = dict(pm.nodes)
    edges = dict(pm.edges)

    for op in delta:
        if isinstance(op, AddNode):
            if op.type not in m.node_types:
                raise ModelError(f"undeclared node type {op.type!r}")
            existing = nodes.get(op.node_id)
            if existing is not None:
                nodes[op.node_id] = existing._replace(truth=ERROR)
                continue
            attrs = {}
            for slot, value in op.attrs:
                _check_attr(m, op.type, slot, value)
                attrs[slot] = value
            if op.truth is ABSENT:
                continue
            nodes[op.node_id] = _Node(op.type, attrs, op.truth)

        elif isinstance(op, AddEdge):
            etype = m.edge_types.get(op.edge_type)
            if etype is None:
                raise ModelError(f"undeclared edge type {op.edge_type!r}")
            for endpoint, want in ((op.src, etype.source), (op.dst, etype.target)):
                node = nodes.get(endpoint)
                if node is None:
                    raise UnknownElementError(f"edge endpoint {endpoint!r} not in model")
                if node.type != want:
                    raise ModelError(
                        f"edge {op.edge_type}: endpoint {endpoint} has type {node.type}, wants {want}"
                    )
            key = (op.edge_type, op.src, op.dst)
            if key in edges:
                edges[key] = ERROR
                continue
            if op.truth is ABSENT:
                continue
            truth = op.truth
            if truth is CERTAIN and etype.upper is not None:
                if _certain_out_degree(edges, op.edge_type, op.src) >= etype.upper:
                    truth = ERROR
            edges[key] = truth

        elif isinstance(op, RefineNode):
            node = nodes.get(op.node_id)
            if node is None:
                raise UnknownElementError(f"refine of unknown node {op.node_id!r}")
            new = _refine(node.truth, op.truth)
            if op.truth is ABSENT and node.truth is POSSIBLE:
                touching = [k for k in edges if k[1] == op.node_id or k[2] == op.node_id]
                if any(edges[k] is not POSSIBLE for k in touching):
                    nodes[op.node_id] = node._replace(truth=ERROR)
                else:
                    for k in touching:
                        del edges[k]
                    del nodes[op.node_id]
            else:
                nodes[op.node_id] = node._replace(truth=new)

        elif isinstance(op, RefineEdge):
            old = edges.get(op.key)
            if old is None:
                raise UnknownElementError(f"refine of unknown edge {op.key!r}")
            if op.truth is ABSENT and old is POSSIBLE:
                del edges[op.key]
                continue
            new = _refine(old, op.truth)
            if new is CERTAIN and old is not CERTAIN:
                etype = m.edge_types[op.key[0]]
                if etype.upper is not None:
                    if _certain_out_degree(edges, op.key[0], op.key[1]) >= etype.upper:
                        new = ERROR
            edges[op.key] = new

        elif isinstance(op, SetAttribute):
            node = nodes.get(op.node_id)
            if node is None:
                raise UnknownElementError(f"attribute set on unknown node {op.node_id!r}")
            _check_attr(m, node.type, op.slot, op.value)
            if op.slot in node.attrs:
                if node.attrs[op.slot] != op.value:
                    nodes[op.node_id] = node._replace(truth=ERROR)
                continue
            attrs = dict(node.attrs)
            attrs[op.slot] = op.value
            nodes[op.node_id] = node._replace(attrs=attrs)

        else:
            raise ModelError(f"unknown delta op {op!r}")

    return PartialModel(m, nodes, edges)


def dump_model(pm: PartialModel) -> str:
    """Stable human-readable listing of all stored elements and truths."""
    lines = []
    for nid in sorted(pm.nodes):
        node = pm.nodes[nid]
        attrs = " ".join(f"{k}={node.attrs[k]!r}" for k in sorted(node.attrs))
        lines.append(f"node {nid} : {node.type} [{node.truth.value}]" + (f" {attrs}" if attrs else ""))
    for key in sorted(pm.edges):
        etype, src, dst = key
        lines.append(f"edge {etype} {src} -> {dst} [{pm.edges[key].value}]")
    return "\n".join(lines)
