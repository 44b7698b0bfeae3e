"""Typed-graph domain declarations and the constraint set evaluated over models.

A metamodel declares node types (with attribute slots), edge types (with
endpoint types and a per-source multiplicity), and optionally an operator
signature table used by type-consistency and sink-typing constraints.

Constraints split into safety constraints, whose violation on certain
elements can never be repaired by further refinement, and completion
constraints, which only make sense on a finished artifact and gate the
end-of-sequence token during decoding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


class MetamodelError(ValueError):
    pass


class UndeclaredTypeError(MetamodelError):
    pass


class MalformedMultiplicityError(MetamodelError):
    pass


class ConstraintError(ValueError):
    pass


@dataclass(frozen=True)
class AttributeSlot:
    name: str
    domain: str  # "int", "string", or "enum"
    enum_values: tuple[str, ...] = ()
    required: bool = False

    def accepts(self, value) -> bool:
        if self.domain == "int":
            return isinstance(value, int) and not isinstance(value, bool)
        if self.domain == "string":
            return isinstance(value, str)
        return isinstance(value, str) and value in self.enum_values


@dataclass(frozen=True)
class NodeType:
    name: str
    attributes: dict[str, AttributeSlot] = field(default_factory=dict)


@dataclass(frozen=True)
class EdgeType:
    """Directed edge kind; multiplicity bounds the out-degree of each source."""

    name: str
    source: str
    target: str
    lower: int = 0
    upper: int | None = None  # None = unbounded


@dataclass(frozen=True)
class Signature:
    """Dataflow signature of one operator kind."""

    inputs: tuple[str, ...]
    result: str
    param: str | None = None  # name of a param domain, or None

    @property
    def arity(self) -> int:
        return len(self.inputs)


@dataclass(frozen=True)
class Metamodel:
    node_types: dict[str, NodeType]
    edge_types: dict[str, EdgeType]
    signatures: dict[str, Signature] = field(default_factory=dict)
    param_domains: dict[str, tuple[str, ...]] = field(default_factory=dict)


@dataclass(frozen=True)
class PatternNode:
    var: str
    type: str
    attrs_eq: tuple[tuple[str, object], ...] = ()
    attrs_neq: tuple[tuple[str, object], ...] = ()


@dataclass(frozen=True)
class PatternEdge:
    edge_type: str
    src: str
    dst: str


@dataclass(frozen=True)
class GraphPattern:
    nodes: tuple[PatternNode, ...]
    edges: tuple[PatternEdge, ...]


KINDS = (
    "TypeConsistency",
    "ExactArity",
    "Acyclic",
    "SingleSink",
    "DefinedBeforeUse",
    "ForbiddenPattern",
)

# Kinds that cannot be falsified before the artifact is finished.
COMPLETION_ONLY_KINDS = ("SingleSink",)


@dataclass(frozen=True)
class Constraint:
    name: str
    kind: str
    edge_type: str | None = None
    arity: dict[str, int] | None = None
    result_types: tuple[str, ...] | None = None
    order_attr: str = "index"
    kind_attr: str = "kind"
    pattern: GraphPattern | None = None


@dataclass(frozen=True)
class ConstraintSet:
    safety: tuple[Constraint, ...] = ()
    completion: tuple[Constraint, ...] = ()

    def __iter__(self):
        return iter(self.safety + self.completion)


def _parse_multiplicity(spec: str) -> tuple[int, int | None]:
    try:
        low_s, high_s = spec.split("..")
        low = int(low_s)
        high = None if high_s == "*" else int(high_s)
    except (ValueError, AttributeError):
        raise MalformedMultiplicityError(f"bad multiplicity {spec!r}, expected 'l..u' or 'l..*'") from None
    if low < 0 or (high is not None and high < low):
        raise MalformedMultiplicityError(f"bad multiplicity {spec!r}: lower must be <= upper")
    return low, high


def _as_dict(doc) -> dict:
    if isinstance(doc, str):
        return json.loads(doc)
    if isinstance(doc, dict):
        return doc
    raise MetamodelError(f"expected JSON text or mapping, got {type(doc).__name__}")


def load_metamodel(doc) -> Metamodel:
    """Load a metamodel from its JSON document (text or parsed mapping)."""
    data = _as_dict(doc)
    node_types: dict[str, NodeType] = {}
    for name, nspec in data.get("node_types", {}).items():
        attrs: dict[str, AttributeSlot] = {}
        for aname, aspec in (nspec or {}).get("attributes", {}).items():
            if isinstance(aspec, str):
                aspec = {"domain": aspec}
            domain = aspec.get("domain", "string")
            if domain not in ("int", "string", "enum"):
                raise MetamodelError(f"node type {name}: attribute {aname}: unknown domain {domain!r}")
            enum_values = tuple(aspec.get("values", ()))
            if domain == "enum" and not enum_values:
                raise MetamodelError(f"node type {name}: enum attribute {aname} lists no values")
            attrs[aname] = AttributeSlot(aname, domain, enum_values, bool(aspec.get("required", False)))
        node_types[name] = NodeType(name, attrs)

    edge_types: dict[str, EdgeType] = {}
    for name, espec in data.get("edge_types", {}).items():
        source = espec.get("source")
        target = espec.get("target")
        for endpoint in (source, target):
            if endpoint not in node_types:
                raise UndeclaredTypeError(f"edge type {name}: undeclared node type {endpoint!r}")
        lower, upper = _parse_multiplicity(espec.get("multiplicity", "0..*"))
        edge_types[name] = EdgeType(name, source, target, lower, upper)

    signatures: dict[str, Signature] = {}
    for kind, sspec in data.get("signatures", {}).items():
        signatures[kind] = Signature(
            inputs=tuple(sspec.get("inputs", ())),
            result=sspec["result"],
            param=sspec.get("param"),
        )
    param_domains = {name: tuple(values) for name, values in data.get("param_domains", {}).items()}
    for kind, sig in signatures.items():
        if sig.param is not None and sig.param not in param_domains:
            raise MetamodelError(f"signature {kind}: unknown param domain {sig.param!r}")
    return Metamodel(node_types, edge_types, signatures, param_domains)


def _load_pattern(spec: dict, m: Metamodel, cname: str) -> GraphPattern:
    nodes = []
    seen_vars = set()
    for nspec in spec.get("nodes", ()):
        var = nspec["var"]
        ntype = nspec["type"]
        if ntype not in m.node_types:
            raise UndeclaredTypeError(f"constraint {cname}: pattern node type {ntype!r} undeclared")
        seen_vars.add(var)
        nodes.append(
            PatternNode(
                var=var,
                type=ntype,
                attrs_eq=tuple(sorted((nspec.get("attrs_eq") or {}).items())),
                attrs_neq=tuple(sorted((nspec.get("attrs_neq") or {}).items())),
            )
        )
    edges = []
    for espec in spec.get("edges", ()):
        etype = espec["type"]
        if etype not in m.edge_types:
            raise UndeclaredTypeError(f"constraint {cname}: pattern edge type {etype!r} undeclared")
        if espec["src"] not in seen_vars or espec["dst"] not in seen_vars:
            raise ConstraintError(f"constraint {cname}: pattern edge references unknown var")
        edges.append(PatternEdge(etype, espec["src"], espec["dst"]))
    return GraphPattern(tuple(nodes), tuple(edges))


def _load_constraint(spec: dict, m: Metamodel) -> Constraint:
    name = spec.get("name")
    kind = spec.get("kind")
    if not name:
        raise ConstraintError("constraint without a name")
    if kind not in KINDS:
        raise ConstraintError(f"constraint {name}: unknown kind {kind!r}")
    edge_type = spec.get("edge_type")
    if kind in ("ExactArity", "Acyclic", "SingleSink", "DefinedBeforeUse", "TypeConsistency"):
        if edge_type is None:
            raise ConstraintError(f"constraint {name}: kind {kind} requires edge_type")
        if edge_type not in m.edge_types:
            raise UndeclaredTypeError(f"constraint {name}: undeclared edge type {edge_type!r}")
    pattern = None
    if kind == "ForbiddenPattern":
        pattern = _load_pattern(spec.get("pattern", {}), m, name)
    arity = None
    if kind == "ExactArity":
        arity = {k: int(v) for k, v in spec.get("arity", {}).items()}
        if not arity:
            raise ConstraintError(f"constraint {name}: ExactArity requires an arity map")
    result_types = None
    if spec.get("result_types") is not None:
        result_types = tuple(spec["result_types"])
    return Constraint(
        name=name,
        kind=kind,
        edge_type=edge_type,
        arity=arity,
        result_types=result_types,
        order_attr=spec.get("order_attr", "index"),
        kind_attr=spec.get("kind_attr", "kind"),
        pattern=pattern,
    )


def load_constraints(doc, m: Metamodel) -> ConstraintSet:
    """Load safety/completion constraint lists from a JSON document."""
    data = _as_dict(doc)
    safety = tuple(_load_constraint(spec, m) for spec in data.get("safety", ()))
    completion = tuple(_load_constraint(spec, m) for spec in data.get("completion", ()))
    names = [c.name for c in safety + completion]
    if len(names) != len(set(names)):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ConstraintError(f"duplicate constraint names: {', '.join(dupes)}")
    for c in safety:
        if c.kind in COMPLETION_ONLY_KINDS:
            raise ConstraintError(f"constraint {c.name}: kind {c.kind} is only sound as a completion constraint")
    return ConstraintSet(safety, completion)
