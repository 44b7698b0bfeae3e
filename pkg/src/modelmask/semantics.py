"""Constraint evaluation over partial models.

``eval_safety`` reports only violations that no further refinement can
repair, so it is sound to prune a candidate token as soon as it returns
VIOLATED. It matches over certain elements (plus attribute literals, which
are write-once). ``eval_completion`` runs the full check on a finished,
fully-certain model and additionally enforces constraints that cannot be
falsified mid-generation, such as sink counting and exact arity.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import grammar as _grammar
from .metamodel import Constraint, ConstraintSet, Metamodel
from .partial_model import (
    CERTAIN,
    ERROR,
    POSSIBLE,
    PartialModel,
    apply_delta,
    empty_model,
    has_error,
)


class NotCompleteError(ValueError):
    pass


@dataclass(frozen=True)
class Violation:
    constraint: str
    witnesses: tuple = ()

    def __str__(self) -> str:
        refs = ", ".join(str(w) for w in self.witnesses)
        return f"{self.constraint}({refs})" if refs else self.constraint


@dataclass(frozen=True)
class Verdict:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def status(self) -> str:
        return "ADMISSIBLE" if self.ok else "VIOLATED"


ADMISSIBLE = Verdict()


def _error_violations(pm: PartialModel) -> list[Violation]:
    by_reason: dict[str, list] = {}
    for nid, node in pm.nodes.items():
        if node.truth is ERROR:
            reason = node.attrs.get("reason")
            name = reason if isinstance(reason, str) and reason else "error"
            by_reason.setdefault(name, []).append(nid)
    for key, truth in pm.edges.items():
        if truth is ERROR:
            by_reason.setdefault("error", []).append(key)
    return [Violation(name, tuple(refs)) for name, refs in by_reason.items()]


def _certain_edges(pm: PartialModel, edge_type: str):
    for key, truth in pm.edges.items():
        if key[0] == edge_type and truth is CERTAIN:
            yield key


def _check_type_consistency(pm: PartialModel, c: Constraint, m: Metamodel, final: bool) -> Violation | None:
    sigs = m.signatures
    kind_attr = c.kind_attr
    for key in _certain_edges(pm, c.edge_type):
        _et, src, dst = key
        src_kind = pm.attr(src, kind_attr)
        dst_kind = pm.attr(dst, kind_attr)
        if src_kind is None or dst_kind is None:
            continue
        src_sig = sigs.get(src_kind)
        dst_sig = sigs.get(dst_kind)
        if src_sig is None or dst_sig is None:
            continue
        if not dst_sig.inputs or src_sig.result not in dst_sig.inputs:
            return Violation(c.name, (key,))
    for nid, node in pm.nodes.items():
        if kind_attr not in m.node_types[node.type].attributes:
            continue
        kind = node.attrs.get(kind_attr)
        if kind is None:
            continue
        sig = sigs.get(kind)
        if sig is None:
            continue
        param = node.attrs.get("param")
        if param is not None:
            if sig.param is None:
                return Violation(c.name, (nid,))
            if param not in m.param_domains.get(sig.param, ()):
                return Violation(c.name, (nid,))
        elif final and sig.param is not None:
            return Violation(c.name, (nid,))
    return None


def _check_exact_arity(pm: PartialModel, c: Constraint, final: bool) -> Violation | None:
    in_deg: dict[str, int] = {}
    for _et, _src, dst in _certain_edges(pm, c.edge_type):
        in_deg[dst] = in_deg.get(dst, 0) + 1
    for nid, node in pm.nodes.items():
        if node.truth is ERROR:
            continue
        kind = node.attrs.get(c.kind_attr)
        if kind is None or kind not in c.arity:
            continue
        required = c.arity[kind]
        actual = in_deg.get(nid, 0)
        if actual > required or (final and actual != required):
            return Violation(c.name, (nid,))
    return None


def _check_acyclic(pm: PartialModel, c: Constraint) -> Violation | None:
    adj: dict[str, list[str]] = {}
    for _et, src, dst in _certain_edges(pm, c.edge_type):
        adj.setdefault(src, []).append(dst)
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {nid: WHITE for nid in pm.nodes}
    for root in pm.nodes:
        if color.get(root, BLACK) != WHITE:
            continue
        stack = [(root, iter(adj.get(root, ())))]
        color[root] = GRAY
        path = [root]
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = BLACK
                stack.pop()
                path.pop()
                continue
            if color.get(nxt, BLACK) == GRAY:
                cycle = path[path.index(nxt):] + [nxt]
                return Violation(c.name, tuple(cycle))
            if color.get(nxt, BLACK) == WHITE:
                color[nxt] = GRAY
                path.append(nxt)
                stack.append((nxt, iter(adj.get(nxt, ()))))
    return None


def _check_defined_before_use(pm: PartialModel, c: Constraint, final: bool) -> Violation | None:
    order = c.order_attr
    for key in _certain_edges(pm, c.edge_type):
        _et, src, dst = key
        src_idx = pm.attr(src, order)
        dst_idx = pm.attr(dst, order)
        if dst_idx is None:
            if final:
                return Violation(c.name, (key,))
            continue
        if src_idx is None:
            if final:
                return Violation(c.name, (key,))
            continue
        if src_idx >= dst_idx:
            return Violation(c.name, (key,))
    return None


def _node_matches(pm: PartialModel, nid: str, pnode) -> bool:
    node = pm.nodes[nid]
    if node.truth is not CERTAIN or node.type != pnode.type:
        return False
    for slot, value in pnode.attrs_eq:
        if node.attrs.get(slot) != value:
            return False
    for slot, value in pnode.attrs_neq:
        actual = node.attrs.get(slot)
        if actual is None or actual == value:
            return False
    return True


def _check_forbidden_pattern(pm: PartialModel, c: Constraint) -> Violation | None:
    """Injective subgraph match of the pattern against certain elements."""
    pattern = c.pattern
    pnodes = pattern.nodes
    candidates = [
        [nid for nid in pm.nodes if _node_matches(pm, nid, pn)] for pn in pnodes
    ]
    if any(not cand for cand in candidates):
        return None
    var_pos = {pn.var: i for i, pn in enumerate(pnodes)}

    def extend(assign: dict[str, str], i: int) -> tuple | None:
        if i == len(pnodes):
            return tuple(assign[pn.var] for pn in pnodes)
        for nid in candidates[i]:
            if nid in assign.values():
                continue
            assign[pnodes[i].var] = nid
            ok = True
            for pe in pattern.edges:
                if var_pos[pe.src] <= i and var_pos[pe.dst] <= i:
                    key = (pe.edge_type, assign[pe.src], assign[pe.dst])
                    if pm.edges.get(key) is not CERTAIN:
                        ok = False
                        break
            if ok:
                found = extend(assign, i + 1)
                if found is not None:
                    return found
            del assign[pnodes[i].var]
        return None

    match = extend({}, 0)
    return Violation(c.name, match) if match is not None else None


def _check_single_sink(pm: PartialModel, c: Constraint, m: Metamodel) -> Violation | None:
    etype = m.edge_types[c.edge_type]
    out_deg: dict[str, int] = {}
    for _et, src, _dst in _certain_edges(pm, c.edge_type):
        out_deg[src] = out_deg.get(src, 0) + 1
    sinks = [
        nid
        for nid, node in pm.nodes.items()
        if node.type == etype.source and node.truth is CERTAIN and out_deg.get(nid, 0) == 0
    ]
    if len(sinks) != 1:
        return Violation(c.name, tuple(sinks))
    if c.result_types:
        kind = pm.attr(sinks[0], c.kind_attr)
        sig = m.signatures.get(kind) if kind is not None else None
        if sig is None or sig.result not in c.result_types:
            return Violation(c.name, (sinks[0],))
    return None


def _check_constraint(pm: PartialModel, c: Constraint, m: Metamodel, final: bool) -> Violation | None:
    if c.kind == "TypeConsistency":
        return _check_type_consistency(pm, c, m, final)
    if c.kind == "ExactArity":
        return _check_exact_arity(pm, c, final)
    if c.kind == "Acyclic":
        return _check_acyclic(pm, c)
    if c.kind == "DefinedBeforeUse":
        return _check_defined_before_use(pm, c, final)
    if c.kind == "ForbiddenPattern":
        return _check_forbidden_pattern(pm, c)
    if c.kind == "SingleSink":
        return _check_single_sink(pm, c, m)
    raise ValueError(f"unknown constraint kind {c.kind!r}")


def eval_safety(pm: PartialModel, cs: ConstraintSet, m: Metamodel) -> Verdict:
    """VIOLATED iff the model holds error elements or a safety constraint
    definitely fails, i.e. fails on certain elements alone."""
    violations = _error_violations(pm)
    for c in cs.safety:
        v = _check_constraint(pm, c, m, final=False)
        if v is not None:
            violations.append(v)
    return Verdict(tuple(violations))


def _conformance_violations(pm: PartialModel, m: Metamodel) -> list[Violation]:
    out = []
    for nid, node in pm.nodes.items():
        if node.truth is ERROR:
            continue
        for slot, decl in m.node_types[node.type].attributes.items():
            if decl.required and slot not in node.attrs:
                out.append(Violation("conformance", (nid, slot)))
    for name, etype in m.edge_types.items():
        if etype.lower <= 0:
            continue
        out_deg: dict[str, int] = {}
        for (et, src, _dst), truth in pm.edges.items():
            if et == name and truth is CERTAIN:
                out_deg[src] = out_deg.get(src, 0) + 1
        for nid, node in pm.nodes.items():
            if node.type == etype.source and out_deg.get(nid, 0) < etype.lower:
                out.append(Violation("conformance", (nid, name)))
    return out


def eval_completion(pm: PartialModel, cs: ConstraintSet, m: Metamodel) -> Verdict:
    """Full verdict on a finished model; raises NotCompleteError if any
    element is still possible."""
    leftovers = [nid for nid, n in pm.nodes.items() if n.truth is POSSIBLE]
    leftovers += [k for k, t in pm.edges.items() if t is POSSIBLE]
    if leftovers:
        raise NotCompleteError(f"model still has possible elements: {leftovers[:4]}")
    violations = _error_violations(pm)
    violations.extend(_conformance_violations(pm, m))
    for c in cs.safety + cs.completion:
        v = _check_constraint(pm, c, m, final=True)
        if v is not None:
            violations.append(v)
    return Verdict(tuple(violations))


@dataclass(frozen=True)
class ValidationReport:
    syntactic: bool
    semantic: bool
    violations: tuple[Violation, ...] = ()


def validate_complete(
    text,
    g: "_grammar.Grammar",
    m: Metamodel,
    cs: ConstraintSet,
    projector,
) -> ValidationReport:
    """Standalone validation of a finished artifact text.

    Syntactic: the text is a sentence of the grammar. Semantic: the model
    projected from the text passes the completion check. This function is
    the reference judge used by the decoding tests.
    """
    data = text.encode("utf-8") if isinstance(text, str) else bytes(text)
    state = _grammar.initial_state(g)
    state = _grammar.advance(state, data)
    if state.dead or not state.accepting:
        return ValidationReport(False, False)

    ps, delta = projector.project_init(m)
    pm = apply_delta(empty_model(m), delta)
    from .projector import events_for_advance

    _st, events = events_for_advance(_grammar.initial_state(g), data)
    ps, delta = projector.project_token(ps, pm, events, data)
    pm = apply_delta(pm, delta)
    if has_error(pm):
        return ValidationReport(True, False, tuple(_error_violations(pm)))
    verdict = eval_completion(pm, cs, m)
    return ValidationReport(True, verdict.ok, verdict.violations)
