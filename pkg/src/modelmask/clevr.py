"""Bundled case study: a scene-query DSL with typed dataflow.

Programs are newline-terminated assignment lines ``v0 = op[param](args)``;
the last line is the program output. The module bundles everything the
engine needs for this artifact kind: grammar and vocabulary documents, the
metamodel and constraint documents, a projector that maintains the dataflow
graph during generation, a program parser, and an executor over scene
graphs.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from . import grammar as _grammar
from . import vocab as _vocab
from .metamodel import ConstraintSet, Metamodel, load_constraints, load_metamodel
from .partial_model import (
    CERTAIN,
    ERROR,
    POSSIBLE,
    AddEdge,
    AddNode,
    PartialModel,
    RefineNode,
    SetAttribute,
)
from .projector import InconsistentEventsError, register_projector

FIXTURE_VERSION = "1"

# --- operator catalog ---------------------------------------------------------

PARAM_DOMAINS: dict[str, tuple[str, ...]] = {
    "color": ("red", "blue", "green", "yellow", "gray", "brown", "purple", "cyan"),
    "shape": ("cube", "sphere", "cylinder"),
    "size": ("small", "large"),
    "material": ("rubber", "metal"),
    "direction": ("left", "right", "front", "behind"),
}

# kind -> (input value types, result value type, param domain)
OPERATORS: dict[str, tuple[tuple[str, ...], str, str | None]] = {
    "scene": ((), "Set", None),
    "filter_color": (("Set",), "Set", "color"),
    "filter_shape": (("Set",), "Set", "shape"),
    "filter_size": (("Set",), "Set", "size"),
    "filter_material": (("Set",), "Set", "material"),
    "unique": (("Set",), "Obj", None),
    "relate": (("Obj",), "Set", "direction"),
    "same_color": (("Obj",), "Set", None),
    "same_shape": (("Obj",), "Set", None),
    "same_size": (("Obj",), "Set", None),
    "same_material": (("Obj",), "Set", None),
    "intersect": (("Set", "Set"), "Set", None),
    "union": (("Set", "Set"), "Set", None),
    "count": (("Set",), "Int", None),
    "exist": (("Set",), "Bool", None),
    "query_color": (("Obj",), "Val", None),
    "query_shape": (("Obj",), "Val", None),
    "query_size": (("Obj",), "Val", None),
    "query_material": (("Obj",), "Val", None),
    "equal_color": (("Val", "Val"), "Bool", None),
    "equal_shape": (("Val", "Val"), "Bool", None),
    "equal_size": (("Val", "Val"), "Bool", None),
    "equal_material": (("Val", "Val"), "Bool", None),
    "equal_integer": (("Int", "Int"), "Bool", None),
    "greater_than": (("Int", "Int"), "Bool", None),
    "less_than": (("Int", "Int"), "Bool", None),
}

ANSWER_TYPES = ("Int", "Bool", "Val")
MAX_IDENTS = 32
IDENTS = tuple(f"v{i}" for i in range(MAX_IDENTS))


# --- asset documents ----------------------------------------------------------


def grammar_doc(ops: tuple[str, ...] = tuple(OPERATORS), idents: tuple[str, ...] = IDENTS) -> str:
    params: list[str] = []
    for domain in PARAM_DOMAINS.values():
        params.extend(domain)
    lines = [
        "# one assignment per line; the last line is the program output",
        "program := stmt | program stmt",
        'stmt := ident osp "=" osp call "\\n"',
        'call := op "(" ")" | op "(" args ")" | op "[" param "]" "(" ")" | op "[" param "]" "(" args ")"',
        'args := ident | args "," osp ident',
        'osp := "" | " "',
        "ident := " + " | ".join(f'"{i}"' for i in idents),
        "op := " + " | ".join(f'"{o}"' for o in ops),
        "param := " + " | ".join(f'"{p}"' for p in params),
    ]
    return "\n".join(lines) + "\n"


def vocabulary_doc(
    ops: tuple[str, ...] = tuple(OPERATORS),
    idents: tuple[str, ...] = IDENTS,
    extra_tokens: tuple[bytes, ...] = (),
) -> str:
    tokens: list[bytes] = [b"=", b"(", b")", b"[", b"]", b",", b" ", b"\n"]
    tokens.extend(o.encode() for o in ops)
    for domain in PARAM_DOMAINS.values():
        tokens.extend(p.encode() for p in domain)
    tokens.extend(i.encode() for i in idents)
    tokens.extend(extra_tokens)
    # eos leads so that greedy ties on flat scores stop at the first legal
    # completion point instead of opening yet another statement
    lines = ["#eos"]
    lines.extend(_vocab.quote_token(t) for t in tokens)
    return "\n".join(lines) + "\n"


def metamodel_doc(ops: tuple[str, ...] = tuple(OPERATORS)) -> str:
    doc = {
        "node_types": {
            "Operator": {
                "attributes": {
                    "kind": {"domain": "enum", "values": list(ops), "required": True},
                    "param": {"domain": "string"},
                    "index": {"domain": "int", "required": True},
                }
            },
            "Violation": {"attributes": {"reason": {"domain": "string"}}},
        },
        "edge_types": {
            "input": {"source": "Operator", "target": "Operator", "multiplicity": "0..*"}
        },
        "signatures": {
            op: {
                "inputs": list(OPERATORS[op][0]),
                "result": OPERATORS[op][1],
                **({"param": OPERATORS[op][2]} if OPERATORS[op][2] else {}),
            }
            for op in ops
        },
        "param_domains": {k: list(v) for k, v in PARAM_DOMAINS.items()},
    }
    return json.dumps(doc, indent=2) + "\n"


def constraints_doc(ops: tuple[str, ...] = tuple(OPERATORS)) -> str:
    doc = {
        "safety": [
            {"name": "Con1", "kind": "TypeConsistency", "edge_type": "input"},
            {
                "name": "Con2",
                "kind": "ExactArity",
                "edge_type": "input",
                "arity": {op: len(OPERATORS[op][0]) for op in ops},
            },
            {"name": "Con3", "kind": "Acyclic", "edge_type": "input"},
            {"name": "DefinedBeforeUse", "kind": "DefinedBeforeUse", "edge_type": "input"},
        ],
        "completion": [
            {"name": "SingleOutput", "kind": "SingleSink", "edge_type": "input"},
            {
                "name": "AnswerTypedOutput",
                "kind": "SingleSink",
                "edge_type": "input",
                "result_types": list(ANSWER_TYPES),
            },
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


@dataclass(frozen=True)
class AssetBundle:
    grammar: _grammar.Grammar
    vocabulary: _vocab.Vocabulary
    metamodel: Metamodel
    constraints: ConstraintSet
    projector: "DataflowProjector"
    projector_name: str = "clevr"


def build_assets(
    ops: tuple[str, ...] = tuple(OPERATORS),
    idents: tuple[str, ...] = IDENTS,
    extra_tokens: tuple[bytes, ...] = (),
) -> AssetBundle:
    """Construct a mutually consistent asset bundle for a restricted or full DSL."""
    g = _grammar.parse_grammar(grammar_doc(ops, idents))
    v = _vocab.load_vocabulary(vocabulary_doc(ops, idents, extra_tokens))
    m = load_metamodel(metamodel_doc(ops))
    cs = load_constraints(constraints_doc(ops), m)
    cont = frozenset(tok[0] for tok in v.tokens if tok)
    projector = DataflowProjector(idents=idents, continuation_bytes=cont, ops=ops)
    return AssetBundle(g, v, m, cs, projector)


def clevr_assets() -> AssetBundle:
    return build_assets()


# --- projector ----------------------------------------------------------------

_IDENT_BYTES = frozenset(b"abcdefghijklmnopqrstuvwxyz0123456789_")


@dataclass(frozen=True)
class ProjState:
    """Cursor over the statement currently being written."""

    pos: int = 0
    stmt_index: int = 0
    phase: str = "lhs"
    frag: str = ""
    lhs: str | None = None
    kind: str | None = None
    args: tuple[str, ...] = ()
    poisoned: bool = False
    poison_seq: int = 0


class ProjectionError(ValueError):
    pass


class _Cursor:
    __slots__ = (
        "stmt_index", "phase", "frag", "lhs", "kind", "args",
        "poisoned", "poison_seq", "defined", "sinks",
    )

    def __init__(self, ps: ProjState):
        self.stmt_index = ps.stmt_index
        self.phase = ps.phase
        self.frag = ps.frag
        self.lhs = ps.lhs
        self.kind = ps.kind
        self.args = list(ps.args)
        self.poisoned = ps.poisoned
        self.poison_seq = ps.poison_seq
        self.defined: dict[str, str] = {}
        self.sinks: dict[str, str] = {}


class _Lexicon:
    """A fixed lexeme universe plus the vocabulary's continuation bytes.

    Inside a token any byte may still arrive, so a fragment only closes
    mid-token when no lexeme at all extends it. At a token boundary the
    remaining bytes must come from future tokens, so extensions count only
    when some vocabulary token starts with the required next byte; with
    that filter a fragment may close at the boundary, and ``candidates``
    lists what it can still become.
    """

    __slots__ = ("entry_set", "ext_any", "ext_reach", "boundary_candidates")

    def __init__(self, universe: tuple[str, ...], continuation_bytes: frozenset[int] | None):
        self.entry_set = frozenset(universe)
        prefix_map: dict[str, list[str]] = {}
        ext_any: dict[str, set[str]] = {}
        for entry in universe:
            for i in range(1, len(entry) + 1):
                prefix = entry[:i]
                prefix_map.setdefault(prefix, []).append(entry)
                if i < len(entry):
                    ext_any.setdefault(prefix, set()).add(entry[i])
        self.ext_any = {p: frozenset(n) for p, n in ext_any.items()}
        if continuation_bytes is None:
            self.ext_reach = self.ext_any
        else:
            reachable = frozenset(chr(b) for b in continuation_bytes)
            self.ext_reach = {p: n & reachable for p, n in self.ext_any.items()}
        candidates: dict[str, tuple[str, ...]] = {}
        for prefix, entries in prefix_map.items():
            reach = self.ext_reach.get(prefix, frozenset())
            keep = tuple(e for e in entries if e == prefix or e[len(prefix)] in reach)
            if keep:
                candidates[prefix] = keep
        self.boundary_candidates = candidates

    def closes_inside(self, frag: str) -> bool:
        return frag in self.entry_set and not self.ext_any.get(frag)

    def closes_at_boundary(self, frag: str) -> bool:
        return frag in self.entry_set and not self.ext_reach.get(frag)

    def candidates(self, frag: str) -> tuple[str, ...]:
        return self.boundary_candidates.get(frag, ())


_context_cache: dict[int, tuple[dict[str, str], dict[str, str]]] = {}


class DataflowProjector:
    """Projects assignment-line programs onto the operator dataflow graph.

    The projector lexes the byte stream itself; fragments resolve either at
    a delimiter byte or as soon as no longer lexeme can extend them. When a
    committed fragment can no longer lead to any admissible construct (every
    identifier compatible with it is undefined, type-incompatible, already
    used, or redefined; the operator has no typed inputs available; or the
    statement would strand a sink no later operator could ever consume), a
    poison node with truth ERROR enters the model so the safety check
    rejects the whole refinement.
    """

    name = "clevr"

    def __init__(
        self,
        idents: tuple[str, ...] = IDENTS,
        continuation_bytes: frozenset[int] | None = None,
        ops: tuple[str, ...] | None = None,
        completion_pruning: bool = True,
        answer_types: tuple[str, ...] | None = ANSWER_TYPES,
    ):
        self.idents = tuple(idents)
        self.catalog = {k: OPERATORS[k] for k in (ops if ops is not None else OPERATORS)}
        self.consumable = frozenset(t for inputs, _r, _p in self.catalog.values() for t in inputs)
        # mirrors the bundled completion constraints (single output node,
        # answer-typed output); disable when validating against custom sets
        self.completion_pruning = completion_pruning
        self.answer_types = frozenset(answer_types) if answer_types else None
        params: list[str] = []
        for domain in PARAM_DOMAINS.values():
            params.extend(domain)
        ident_lex = _Lexicon(self.idents, continuation_bytes)
        self.lexicons = {
            "lhs": ident_lex,
            "arg": ident_lex,
            "op": _Lexicon(tuple(self.catalog), continuation_bytes),
            "param": _Lexicon(tuple(params), continuation_bytes),
        }

    # -- projector interface --

    def project_init(self, m: Metamodel):
        return ProjState(), ()

    def project_token(self, ps: ProjState, pm: PartialModel, events, token_bytes: bytes):
        if events:
            first = events[0]
            if first.kind == "consumed" and first.start not in (ps.pos, -1):
                raise InconsistentEventsError(
                    f"events start at byte {first.start}, projector is at {ps.pos}"
                )
        if not token_bytes:
            return ps, ()
        cur = _Cursor(ps)
        cur.defined, cur.sinks = self._context(pm)
        delta: list = []
        for b in token_bytes:
            self._step_byte(cur, b, delta)
        if cur.frag and cur.phase in ("lhs", "op", "param", "arg"):
            if self.lexicons[cur.phase].closes_at_boundary(cur.frag):
                self._flush_fragment(cur, delta)
            else:
                self._check_open(cur, delta)
        state = ProjState(
            pos=ps.pos + len(token_bytes),
            stmt_index=cur.stmt_index,
            phase=cur.phase,
            frag=cur.frag,
            lhs=cur.lhs,
            kind=cur.kind,
            args=tuple(cur.args),
            poisoned=cur.poisoned,
            poison_seq=cur.poison_seq,
        )
        return state, tuple(delta)

    # -- internals --

    def _context(self, pm: PartialModel) -> tuple[dict[str, str], dict[str, str]]:
        """Committed context: defined id -> kind, and sink id -> result type."""
        cached = _context_cache.get(pm.vid)
        if cached is not None:
            return cached
        defined = {
            nid: node.attrs["kind"]
            for nid, node in pm.nodes.items()
            if node.type == "Operator" and "index" in node.attrs and "kind" in node.attrs
        }
        consumed = {src for (et, src, _dst), t in pm.edges.items() if et == "input" and t is CERTAIN}
        sinks = {
            nid: OPERATORS[kind][1] for nid, kind in defined.items() if nid not in consumed
        }
        if len(_context_cache) > 8192:
            _context_cache.clear()
        entry = (defined, sinks)
        _context_cache[pm.vid] = entry
        return entry

    def _poison(self, cur: _Cursor, delta: list, reason: str) -> None:
        if cur.poisoned:
            return
        delta.append(
            AddNode(f"!p{cur.poison_seq}", "Violation", ERROR, (("reason", reason),))
        )
        cur.poison_seq += 1
        cur.poisoned = True

    def _sink_types(self, cur: _Cursor) -> list[str]:
        """Result types of committed sinks not consumed by the open statement."""
        args = cur.args
        return [t for nid, t in cur.sinks.items() if nid not in args]

    def _stmt_doomed(self, kind: str, n_filled: int, sink_types: list[str], n_defined: int) -> bool:
        """Whether finishing this statement strands an unrepairable sink surplus.

        Three inevitabilities, all judged in the statement's best case: a
        permanent sink (result type no catalog operator consumes) next to
        any other sink can never get back to a single output; merging n
        sinks needs at least n-1 further statements, which the remaining
        identifier supply must cover; and when the statement burns the last
        identifier, its node is the final output and must be answer-typed.
        """
        if not self.completion_pruning:
            return False
        inputs, result, _param = self.catalog[kind]
        remaining = len(inputs) - n_filled
        absorbed = 0
        if remaining > 0:
            want = inputs[n_filled]
            absorbed = min(remaining, sum(1 for t in sink_types if t == want))
        after = len(sink_types) - absorbed + 1
        permanent = sum(1 for t in sink_types if t not in self.consumable)
        if result not in self.consumable:
            permanent += 1
        if permanent >= 1 and after >= 2:
            return True
        ids_left = len(self.idents) - n_defined - 1
        if after - 1 > ids_left:
            return True
        if self.answer_types is not None and ids_left == 0:
            if after != 1 or result not in self.answer_types:
                return True
        return False

    def _op_feasible(self, kind: str, cur: _Cursor) -> bool:
        inputs, _result, _param = self.catalog[kind]
        if inputs:
            want = inputs[0]
            available = sum(1 for k in cur.defined.values() if OPERATORS[k][1] == want)
            if available < len(inputs):
                return False
        return not self._stmt_doomed(kind, 0, self._sink_types(cur), len(cur.defined))

    def _arg_admissible(self, cur: _Cursor, candidate: str, slot: int) -> bool:
        inputs = self.catalog[cur.kind][0]
        kind = cur.defined.get(candidate)
        if kind is None or candidate in cur.args:
            return False
        if OPERATORS[kind][1] != inputs[slot]:
            return False
        sink_types = self._sink_types(cur)
        if candidate in cur.sinks:
            sink_types.remove(cur.sinks[candidate])
        return not self._stmt_doomed(cur.kind, slot + 1, sink_types, len(cur.defined))

    def _flush_lhs(self, cur: _Cursor, delta: list) -> None:
        cur.lhs = cur.frag
        cur.frag = ""
        cur.phase = "lhs_done"
        if cur.lhs in cur.defined:
            self._poison(cur, delta, "Redefinition")

    def _flush_op(self, cur: _Cursor, delta: list) -> None:
        cur.kind = cur.frag
        cur.frag = ""
        cur.phase = "op_done"
        if cur.kind not in self.catalog:
            raise ProjectionError(f"unknown operator {cur.kind!r}")
        if not cur.poisoned and not self._op_feasible(cur.kind, cur):
            if self.catalog[cur.kind][0] and not cur.defined:
                self._poison(cur, delta, "DefinedBeforeUse")
            elif self._stmt_doomed(cur.kind, 0, self._sink_types(cur), len(cur.defined)):
                self._poison(cur, delta, "SingleOutput")
            else:
                self._poison(cur, delta, "Con1")
        if not cur.poisoned:
            delta.append(AddNode(cur.lhs, "Operator", POSSIBLE, (("kind", cur.kind),)))

    def _flush_param(self, cur: _Cursor, delta: list) -> None:
        value = cur.frag
        cur.frag = ""
        cur.phase = "param_flushed"
        if not cur.poisoned:
            domain = self.catalog[cur.kind][2]
            if domain is None or value not in PARAM_DOMAINS[domain]:
                self._poison(cur, delta, "Con1")
            else:
                delta.append(SetAttribute(cur.lhs, "param", value))

    def _flush_arg(self, cur: _Cursor, delta: list) -> None:
        value = cur.frag
        cur.frag = ""
        cur.phase = "arg_flushed"
        if not cur.poisoned:
            if value not in cur.defined:
                self._poison(cur, delta, "DefinedBeforeUse")
            elif value in cur.args:
                self._poison(cur, delta, "Con2")
            elif OPERATORS[cur.defined[value]][1] != self.catalog[cur.kind][0][min(len(cur.args), len(self.catalog[cur.kind][0]) - 1)]:
                delta.append(AddEdge("input", value, cur.lhs, CERTAIN))
            else:
                sink_types = self._sink_types(cur)
                if value in cur.sinks:
                    sink_types.remove(cur.sinks[value])
                if self._stmt_doomed(cur.kind, len(cur.args) + 1, sink_types, len(cur.defined)):
                    self._poison(cur, delta, "SingleOutput")
                else:
                    delta.append(AddEdge("input", value, cur.lhs, CERTAIN))
        cur.args.append(value)

    def _open_arg_slot(self, cur: _Cursor, delta: list) -> None:
        if not cur.poisoned:
            arity = len(self.catalog[cur.kind][0])
            if len(cur.args) >= arity:
                self._poison(cur, delta, "Con2")

    def _complete_stmt(self, cur: _Cursor, delta: list) -> None:
        if not cur.poisoned:
            delta.append(SetAttribute(cur.lhs, "index", cur.stmt_index))
            delta.append(RefineNode(cur.lhs, CERTAIN))
            cur.defined = dict(cur.defined)
            cur.defined[cur.lhs] = cur.kind
            cur.sinks = {nid: t for nid, t in cur.sinks.items() if nid not in cur.args}
            cur.sinks[cur.lhs] = OPERATORS[cur.kind][1]
        cur.stmt_index += 1
        cur.phase = "lhs"
        cur.frag = ""
        cur.lhs = None
        cur.kind = None
        cur.args = []
        cur.poisoned = False

    def _flush_fragment(self, cur: _Cursor, delta: list) -> None:
        phase = cur.phase
        if phase == "lhs":
            self._flush_lhs(cur, delta)
        elif phase == "op":
            self._flush_op(cur, delta)
        elif phase == "param":
            self._flush_param(cur, delta)
        else:
            self._flush_arg(cur, delta)

    def _append_frag(self, cur: _Cursor, ch: str, delta: list) -> None:
        cur.frag += ch
        if self.lexicons[cur.phase].closes_inside(cur.frag):
            self._flush_fragment(cur, delta)

    def _step_byte(self, cur: _Cursor, b: int, delta: list) -> None:
        phase = cur.phase
        if b in _IDENT_BYTES:
            ch = chr(b)
            if phase in ("lhs", "op", "param", "arg"):
                self._append_frag(cur, ch, delta)
            elif phase == "op_wait":
                cur.phase = "op"
                cur.frag = ""
                self._append_frag(cur, ch, delta)
            elif phase in ("args_start", "arg_sep"):
                self._open_arg_slot(cur, delta)
                cur.phase = "arg"
                cur.frag = ""
                self._append_frag(cur, ch, delta)
            else:
                raise ProjectionError(f"unexpected identifier byte in phase {phase}")
            return

        ch = chr(b)
        if ch == " ":
            if phase == "lhs" and cur.frag:
                self._flush_lhs(cur, delta)
            elif phase in ("lhs_done", "op_wait", "arg_sep"):
                pass
            else:
                raise ProjectionError(f"unexpected space in phase {phase}")
        elif ch == "=":
            if phase == "lhs" and cur.frag:
                self._flush_lhs(cur, delta)
            if cur.phase != "lhs_done":
                raise ProjectionError(f"unexpected '=' in phase {phase}")
            cur.phase = "op_wait"
        elif ch == "[":
            if phase == "op" and cur.frag:
                self._flush_op(cur, delta)
            if cur.phase != "op_done":
                raise ProjectionError(f"unexpected '[' in phase {phase}")
            if not cur.poisoned and self.catalog[cur.kind][2] is None:
                self._poison(cur, delta, "Con1")
            cur.phase = "param"
            cur.frag = ""
        elif ch == "]":
            if phase == "param" and cur.frag:
                self._flush_param(cur, delta)
            if cur.phase != "param_flushed":
                raise ProjectionError(f"unexpected ']' in phase {phase}")
            cur.phase = "after_param"
        elif ch == "(":
            if phase == "op" and cur.frag:
                self._flush_op(cur, delta)
            if cur.phase == "op_done":
                if not cur.poisoned and self.catalog[cur.kind][2] is not None:
                    self._poison(cur, delta, "Con1")
            elif cur.phase != "after_param":
                raise ProjectionError(f"unexpected '(' in phase {phase}")
            cur.phase = "args_start"
        elif ch == ",":
            if phase == "arg" and cur.frag:
                self._flush_arg(cur, delta)
            if cur.phase != "arg_flushed":
                raise ProjectionError(f"unexpected ',' in phase {phase}")
            cur.phase = "arg_sep"
        elif ch == ")":
            if phase == "arg" and cur.frag:
                self._flush_arg(cur, delta)
            if cur.phase == "arg_flushed" or cur.phase == "args_start":
                if not cur.poisoned:
                    arity = len(self.catalog[cur.kind][0])
                    if len(cur.args) != arity:
                        self._poison(cur, delta, "Con2")
                    elif arity == 0 and self._stmt_doomed(cur.kind, 0, self._sink_types(cur), len(cur.defined)):
                        self._poison(cur, delta, "SingleOutput")
                cur.phase = "stmt_end"
            else:
                raise ProjectionError(f"unexpected ')' in phase {phase}")
        elif ch == "\n":
            if cur.phase != "stmt_end":
                raise ProjectionError(f"unexpected newline in phase {phase}")
            self._complete_stmt(cur, delta)
        else:
            raise ProjectionError(f"unexpected byte {b!r} in phase {phase}")

    def _check_open(self, cur: _Cursor, delta: list) -> None:
        """Poison when no admissible lexeme can extend the open fragment."""
        if cur.poisoned:
            return
        frag = cur.frag
        phase = cur.phase
        candidates = self.lexicons[phase].candidates(frag)
        if phase == "lhs":
            if not any(c not in cur.defined for c in candidates):
                self._poison(cur, delta, "Redefinition")
        elif phase == "op":
            if not any(self._op_feasible(c, cur) for c in candidates):
                self._poison(cur, delta, "Con1" if cur.defined else "DefinedBeforeUse")
        elif phase == "param":
            domain = self.catalog[cur.kind][2]
            allowed = PARAM_DOMAINS.get(domain, ()) if domain else ()
            if not any(c in allowed for c in candidates):
                self._poison(cur, delta, "Con1")
        elif phase == "arg":
            slot = len(cur.args)
            if slot >= len(self.catalog[cur.kind][0]):
                self._poison(cur, delta, "Con2")
                return
            if not any(self._arg_admissible(cur, c, slot) for c in candidates):
                any_defined = any(c in cur.defined for c in candidates)
                self._poison(cur, delta, "Con1" if any_defined else "DefinedBeforeUse")


register_projector("clevr", DataflowProjector)


# --- program parsing and execution --------------------------------------------


class ProgramError(ValueError):
    pass


class ProgramSyntaxError(ProgramError):
    pass


class UseBeforeDefError(ProgramError):
    pass


class DuplicateIdError(ProgramError):
    pass


class RuntimeNonUniqueError(RuntimeError):
    """`unique` applied to a set whose size is not exactly one."""


@dataclass(frozen=True)
class Statement:
    target: str
    kind: str
    param: str | None
    args: tuple[str, ...]


@dataclass(frozen=True)
class ProgramDag:
    statements: tuple[Statement, ...]

    @property
    def output(self) -> str:
        return self.statements[-1].target


_LINE_RE = re.compile(
    r"^(?P<target>v\d+) ?= ?(?P<kind>[a-z_]+)(?:\[(?P<param>[a-z]+)\])?\((?P<args>[^)]*)\)$"
)


def parse_program(text: str) -> ProgramDag:
    """Parse DSL text into its statement list, enforcing define-before-use."""
    statements: list[Statement] = []
    seen: set[str] = set()
    if not text.endswith("\n"):
        raise ProgramSyntaxError("program must end with a newline")
    for lineno, line in enumerate(text.splitlines()):
        m = _LINE_RE.match(line)
        if m is None:
            raise ProgramSyntaxError(f"line {lineno}: cannot parse {line!r}")
        kind = m.group("kind")
        if kind not in OPERATORS:
            raise ProgramSyntaxError(f"line {lineno}: unknown operator {kind!r}")
        raw_args = m.group("args").strip()
        args = tuple(a.strip() for a in raw_args.split(",")) if raw_args else ()
        target = m.group("target")
        if target in seen:
            raise DuplicateIdError(f"line {lineno}: {target} already defined")
        for a in args:
            if a not in seen:
                raise UseBeforeDefError(f"line {lineno}: {a} used before definition")
        seen.add(target)
        statements.append(Statement(target, kind, m.group("param"), args))
    if not statements:
        raise ProgramSyntaxError("empty program")
    return ProgramDag(tuple(statements))


def render_program(dag: ProgramDag) -> str:
    lines = []
    for st in dag.statements:
        param = f"[{st.param}]" if st.param else ""
        lines.append(f"{st.target} = {st.kind}{param}({','.join(st.args)})")
    return "\n".join(lines) + "\n"


# --- scenes -------------------------------------------------------------------


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class SceneObject:
    color: str
    shape: str
    size: str
    material: str


@dataclass(frozen=True)
class Scene:
    objects: tuple[SceneObject, ...]
    relationships: dict[str, tuple[tuple[int, ...], ...]]


_INVERSE = {"left": "right", "right": "left", "front": "behind", "behind": "front"}


def load_scene(doc) -> Scene:
    data = json.loads(doc) if isinstance(doc, str) else doc
    objects = []
    for i, ospec in enumerate(data.get("objects", ())):
        for attr, domain_name in (
            ("color", "color"),
            ("shape", "shape"),
            ("size", "size"),
            ("material", "material"),
        ):
            value = ospec.get(attr)
            if value not in PARAM_DOMAINS[domain_name]:
                raise SceneError(f"object {i}: bad {attr} {value!r}")
        objects.append(SceneObject(ospec["color"], ospec["shape"], ospec["size"], ospec["material"]))
    n = len(objects)
    rels: dict[str, tuple[tuple[int, ...], ...]] = {}
    raw = data.get("relationships", {})
    for direction in _INVERSE:
        lists = raw.get(direction, [[] for _ in range(n)])
        if len(lists) != n:
            raise SceneError(f"relationships[{direction}] must list every object")
        for i, related in enumerate(lists):
            for j in related:
                if not (0 <= j < n):
                    raise SceneError(f"relationships[{direction}][{i}]: index {j} out of range")
                if j == i:
                    raise SceneError(f"relationships[{direction}][{i}]: self-relation")
        rels[direction] = tuple(tuple(sorted(related)) for related in lists)
    for direction, inverse in _INVERSE.items():
        for i in range(n):
            for j in rels[direction][i]:
                if i not in rels[inverse][j]:
                    raise SceneError(
                        f"{direction}[{i}] contains {j} but {inverse}[{j}] misses {i}"
                    )
    return Scene(tuple(objects), rels)


def scene_doc(scene: Scene) -> str:
    return json.dumps(
        {
            "objects": [
                {"color": o.color, "shape": o.shape, "size": o.size, "material": o.material}
                for o in scene.objects
            ],
            "relationships": {d: [list(r) for r in rels] for d, rels in scene.relationships.items()},
        },
        indent=2,
    ) + "\n"


# --- executor -----------------------------------------------------------------


@dataclass(frozen=True)
class Obj:
    index: int


class ExecutorTypeError(TypeError):
    pass


def _want(value, py_type, what: str):
    if not isinstance(value, py_type) or (py_type is int and isinstance(value, bool)):
        raise ExecutorTypeError(f"{what}: expected {py_type.__name__}, got {type(value).__name__}")
    return value


def _apply_op(kind: str, param: str | None, args: list, scene: Scene):
    objs = scene.objects
    if kind == "scene":
        return frozenset(range(len(objs)))
    if kind.startswith("filter_"):
        attr = kind.removeprefix("filter_")
        s = _want(args[0], frozenset, kind)
        return frozenset(i for i in s if getattr(objs[i], attr) == param)
    if kind == "unique":
        s = _want(args[0], frozenset, kind)
        if len(s) != 1:
            raise RuntimeNonUniqueError(f"unique over set of size {len(s)}")
        return Obj(next(iter(s)))
    if kind == "relate":
        o = _want(args[0], Obj, kind)
        return frozenset(scene.relationships[param][o.index])
    if kind.startswith("same_"):
        attr = kind.removeprefix("same_")
        o = _want(args[0], Obj, kind)
        ref = getattr(objs[o.index], attr)
        return frozenset(i for i in range(len(objs)) if i != o.index and getattr(objs[i], attr) == ref)
    if kind in ("intersect", "union"):
        a = _want(args[0], frozenset, kind)
        b = _want(args[1], frozenset, kind)
        return a & b if kind == "intersect" else a | b
    if kind == "count":
        return len(_want(args[0], frozenset, kind))
    if kind == "exist":
        return len(_want(args[0], frozenset, kind)) > 0
    if kind.startswith("query_"):
        attr = kind.removeprefix("query_")
        o = _want(args[0], Obj, kind)
        return getattr(objs[o.index], attr)
    if kind.startswith("equal_") and kind != "equal_integer":
        a = _want(args[0], str, kind)
        b = _want(args[1], str, kind)
        return a == b
    if kind == "equal_integer":
        return _want(args[0], int, kind) == _want(args[1], int, kind)
    if kind == "greater_than":
        return _want(args[0], int, kind) > _want(args[1], int, kind)
    if kind == "less_than":
        return _want(args[0], int, kind) < _want(args[1], int, kind)
    raise ProgramError(f"unknown operator {kind!r}")


def execute(dag: ProgramDag, scene: Scene):
    """Run the program; returns an int, bool, or attribute-string answer."""
    values: dict[str, object] = {}
    for st in dag.statements:
        values[st.target] = _apply_op(st.kind, st.param, [values[a] for a in st.args], scene)
    return values[dag.output]


def render_answer(value) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return value
    raise ExecutorTypeError(f"value {value!r} is not an answer type")
