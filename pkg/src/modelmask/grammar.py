"""Context-free grammars over bytes and an incremental chart recognizer.

The recognizer consumes input byte by byte and is checkpointable: every
``RecognizerState`` is an immutable value, so candidate continuations can be
explored from a shared state without interference. Terminals are single
bytes; multi-byte quoted literals in the grammar document expand to byte
sequences, which keeps recognition independent of how a vocabulary happens
to segment the text.

Chart columns form a persistent DAG (items hold references to their origin
column). Each column carries an interned structural signature; two columns
with equal signatures behave identically for every future input, which makes
byte-step and token-mask results safely memoizable across decoding runs.
"""

from __future__ import annotations

from .vocab import TokenMask, Vocabulary


class GrammarError(ValueError):
    pass


class GrammarSyntaxError(GrammarError):
    def __init__(self, msg: str, line: int, col: int):
        self.line = line
        self.col = col
        super().__init__(f"line {line}, col {col}: {msg}")


class UndeclaredSymbolError(GrammarError):
    def __init__(self, name: str, line: int):
        self.name = name
        super().__init__(f"line {line}: undeclared symbol {name!r}")


class DeadStateError(GrammarError):
    pass


def _term(byte: int) -> int:
    """Terminal symbols are encoded as negative ints, nonterminals as >= 0."""
    return -1 - byte


class _Column:
    """One chart column: the item set after consuming some byte prefix.

    ``pos`` is the absolute byte offset for columns built on the committed
    path (None for columns produced via the signature memo, which may be
    shared between structurally identical prefixes).
    """

    __slots__ = ("items", "wants_byte", "wants_nt", "accepting", "sig", "pos")

    def __init__(self) -> None:
        self.items: tuple = ()
        self.wants_byte: dict[int, list] = {}
        self.wants_nt: dict[int, list] = {}
        self.accepting = False
        self.sig = -1
        self.pos: int | None = None


class Grammar:
    """Compiled grammar: productions over byte terminals plus recognizer caches."""

    def __init__(self, nt_names: list[str], prods: list[tuple[int, tuple[int, ...]]], start: int):
        self.nt_names = tuple(nt_names)
        self.nt_index = {n: i for i, n in enumerate(nt_names)}
        self.prods = tuple(prods)
        self.start = start
        by_lhs: dict[int, list[int]] = {}
        for pi, (lhs, _rhs) in enumerate(prods):
            by_lhs.setdefault(lhs, []).append(pi)
        self.prods_by_lhs = {k: tuple(v) for k, v in by_lhs.items()}
        self.nullable = self._compute_nullable()
        self._intern: dict[tuple, int] = {}
        self._col_memo: dict[tuple[int, int], _Column | None] = {}
        self._mask_memo: dict[tuple[int, int], tuple] = {}

    @property
    def start_name(self) -> str:
        return self.nt_names[self.start]

    def _compute_nullable(self) -> frozenset[int]:
        nullable: set[int] = set()
        changed = True
        while changed:
            changed = False
            for lhs, rhs in self.prods:
                if lhs in nullable:
                    continue
                if all(sym >= 0 and sym in nullable for sym in rhs):
                    nullable.add(lhs)
                    changed = True
        return frozenset(nullable)

    def _sign(self, canonical: tuple) -> int:
        sig = self._intern.get(canonical)
        if sig is None:
            sig = len(self._intern)
            self._intern[canonical] = sig
        return sig


class RecognizerState:
    """Checkpoint of the recognizer after consuming a byte prefix."""

    __slots__ = ("grammar", "column", "pos", "dead", "accepting")

    def __init__(self, grammar: Grammar, column: _Column | None, pos: int):
        self.grammar = grammar
        self.column = column
        self.pos = pos
        self.dead = column is None
        self.accepting = column.accepting if column is not None else False

    def viable_bytes(self) -> frozenset[int]:
        if self.column is None:
            return frozenset()
        return frozenset(self.column.wants_byte.keys())


# Augmented start production index; its completion marks an accepting state.
_AUG = 0


def _close(grammar: Grammar, seed_for, pos: int | None) -> _Column | None:
    col = _Column()
    col.pos = pos
    prods = grammar.prods
    by_lhs = grammar.prods_by_lhs
    nullable = grammar.nullable
    items: set = set()
    stack: list = []
    wants_byte = col.wants_byte
    wants_nt = col.wants_nt
    predicted: set[int] = set()

    for it in seed_for(col):
        if it not in items:
            items.add(it)
            stack.append(it)
    if not items:
        return None

    while stack:
        it = stack.pop()
        p, d, o = it
        lhs, rhs = prods[p]
        if d == len(rhs):
            if p == _AUG:
                col.accepting = True
            elif o is not col:
                # Same-column completions are covered by the nullable advance
                # performed at prediction time.
                for p2, d2, o2 in o.wants_nt.get(lhs, ()):
                    nit = (p2, d2 + 1, o2)
                    if nit not in items:
                        items.add(nit)
                        stack.append(nit)
            continue
        sym = rhs[d]
        if sym < 0:
            wants_byte.setdefault(-1 - sym, []).append(it)
            continue
        wants_nt.setdefault(sym, []).append(it)
        if sym not in predicted:
            predicted.add(sym)
            for q in by_lhs.get(sym, ()):
                nit = (q, 0, col)
                if nit not in items:
                    items.add(nit)
                    stack.append(nit)
        if sym in nullable:
            nit = (p, d + 1, o)
            if nit not in items:
                items.add(nit)
                stack.append(nit)

    col.items = tuple(items)
    canonical = tuple(sorted((p, d, -1 if o is col else o.sig) for p, d, o in items))
    col.sig = grammar._sign(canonical)
    return col


def _build_next(grammar: Grammar, col: _Column, byte: int, pos: int | None) -> _Column | None:
    seeds = col.wants_byte.get(byte)
    if not seeds:
        return None
    return _close(grammar, lambda _c: [(p, d + 1, o) for p, d, o in seeds], pos)


def _step_cached(grammar: Grammar, col: _Column, byte: int) -> _Column | None:
    key = (col.sig, byte)
    memo = grammar._col_memo
    if key in memo:
        return memo[key]
    nxt = _build_next(grammar, col, byte, None)
    memo[key] = nxt
    return nxt


def initial_state(grammar: Grammar) -> RecognizerState:
    col = _close(grammar, lambda c: [(_AUG, 0, c)], 0)
    return RecognizerState(grammar, col, 0)


def advance(state: RecognizerState, data: bytes) -> RecognizerState:
    """Consume ``data``; returns a new state, leaving ``state`` reusable.

    A state with no viable continuation is dead; advancing a dead state (or
    past the point of death) stays dead.
    """
    if state.dead or not data:
        return state
    grammar = state.grammar
    col = state.column
    pos = state.pos
    for b in data:
        pos += 1
        col = _build_next(grammar, col, b, pos)
        if col is None:
            return RecognizerState(grammar, None, pos)
    return RecognizerState(grammar, col, pos)


def advance_with_completions(
    state: RecognizerState, data: bytes
) -> tuple[RecognizerState, list[tuple[str, int, int]]]:
    """Like :func:`advance`, also reporting rule completions.

    Each entry is ``(rule name, start byte, end byte)`` for an item that
    completed while consuming ``data``. Completions are recognizer facts:
    locally ambiguous grammars may report completions that the surrounding
    parse later abandons. Start offsets are -1 when the origin column does
    not carry position information.
    """
    if state.dead or not data:
        return state, []
    grammar = state.grammar
    prods = grammar.prods
    names = grammar.nt_names
    col = state.column
    pos = state.pos
    out: list[tuple[str, int, int]] = []
    for b in data:
        pos += 1
        col = _build_next(grammar, col, b, pos)
        if col is None:
            return RecognizerState(grammar, None, pos), out
        seen: set = set()
        for p, d, o in col.items:
            lhs, rhs = prods[p]
            if d == len(rhs) and p != _AUG:
                start = o.pos if o.pos is not None else -1
                key = (lhs, start)
                if key not in seen:
                    seen.add(key)
                    out.append((names[lhs], start, pos))
    return RecognizerState(grammar, col, pos), out


def syntactic_mask(state: RecognizerState, vocab: Vocabulary) -> TokenMask:
    """Tokens that keep the prefix syntactically alive; eos iff accepting."""
    mask, _states = mask_with_states(state, vocab)
    return mask


def mask_with_states(
    state: RecognizerState, vocab: Vocabulary
) -> tuple[TokenMask, dict[int, RecognizerState]]:
    """Syntactic mask plus the recognizer state reached by each allowed token.

    Shared token prefixes advance the recognizer once via the vocabulary
    trie; results are memoized on the (column signature, vocabulary) pair.
    """
    if state.dead:
        raise DeadStateError("cannot mask from a dead recognizer state")
    grammar = state.grammar
    key = (state.column.sig, id(vocab))
    entry = grammar._mask_memo.get(key)
    if entry is not None and entry[0] is vocab:
        bits, ends = entry[1], entry[2]
    else:
        bits = bytearray(len(vocab))
        ends: dict[int, _Column] = {}
        stack = [(vocab.trie_root(), state.column)]
        while stack:
            node, col = stack.pop()
            for byte, child in node.children.items():
                nxt = _step_cached(grammar, col, byte)
                if nxt is None:
                    continue
                for tid in child.token_ids:
                    bits[tid] = 1
                    ends[tid] = nxt
                if child.children:
                    stack.append((child, nxt))
        bits = bytes(bits)
        grammar._mask_memo[key] = (vocab, bits, ends)
    mask = TokenMask(len(vocab))
    mask.bits[:] = bits
    if state.accepting:
        mask.allow(vocab.eos_id)
    states = {
        tid: RecognizerState(grammar, col, state.pos + len(vocab.tokens[tid]))
        for tid, col in ends.items()
    }
    return mask, states


# --- grammar document parsing -----------------------------------------------


def _read_quoted(line: str, i: int, lineno: int) -> tuple[bytes, int]:
    assert line[i] == '"'
    out = bytearray()
    i += 1
    while i < len(line):
        ch = line[i]
        if ch == '"':
            return bytes(out), i + 1
        if ch == "\\":
            if i + 1 >= len(line):
                raise GrammarSyntaxError("dangling escape", lineno, i)
            esc = line[i + 1]
            simple = {"n": 0x0A, "t": 0x09, "r": 0x0D, "0": 0x00, "\\": 0x5C, '"': 0x22}
            if esc in simple:
                out.append(simple[esc])
                i += 2
                continue
            if esc == "x":
                hexpart = line[i + 2 : i + 4]
                if len(hexpart) != 2:
                    raise GrammarSyntaxError("bad \\x escape", lineno, i)
                try:
                    out.append(int(hexpart, 16))
                except ValueError:
                    raise GrammarSyntaxError("bad \\x escape", lineno, i) from None
                i += 4
                continue
            raise GrammarSyntaxError(f"unknown escape \\{esc}", lineno, i)
        out.extend(ch.encode("utf-8"))
        i += 1
    raise GrammarSyntaxError("unterminated literal", lineno, i)


def _is_name_char(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def _tokenize_rule(line: str, lineno: int) -> list[tuple]:
    toks: list[tuple] = []
    i = 0
    n = len(line)
    while i < n:
        ch = line[i]
        if ch in " \t":
            i += 1
            continue
        if ch == "#":
            break
        if ch == '"':
            lit, i = _read_quoted(line, i, lineno)
            toks.append(("lit", lit))
            continue
        if ch == "|":
            toks.append(("pipe",))
            i += 1
            continue
        if ch == ":" and i + 1 < n and line[i + 1] == "=":
            toks.append(("assign",))
            i += 2
            continue
        if _is_name_char(ch):
            j = i
            while j < n and _is_name_char(line[j]):
                j += 1
            toks.append(("name", line[i:j]))
            i = j
            continue
        raise GrammarSyntaxError(f"unexpected character {ch!r}", lineno, i)
    return toks


def parse_grammar(text: str) -> Grammar:
    """Parse a grammar document; the first rule's name is the start symbol.

    One rule per line: ``name := alternative ("|" alternative)*`` where an
    alternative is a whitespace-separated sequence of rule names and quoted
    byte literals; the empty literal ``""`` denotes the empty sequence.
    """
    rules: dict[str, list[tuple[int, list[tuple]]]] = {}
    order: list[str] = []
    for lineno, line in enumerate(text.splitlines()):
        toks = _tokenize_rule(line, lineno)
        if not toks:
            continue
        if len(toks) < 2 or toks[0][0] != "name" or toks[1][0] != "assign":
            raise GrammarSyntaxError("expected `name := ...`", lineno, 0)
        name = toks[0][1]
        alts: list[list[tuple]] = [[]]
        for tok in toks[2:]:
            if tok[0] == "pipe":
                alts.append([])
            elif tok[0] in ("name", "lit"):
                alts[-1].append(tok)
            else:
                raise GrammarSyntaxError("misplaced `:=`", lineno, 0)
        if name not in rules:
            rules[name] = []
            order.append(name)
        rules[name].extend((lineno, alt) for alt in alts)
    if not order:
        raise GrammarError("grammar document declares no rules")

    nt_names = list(order)
    nt_index = {n: i for i, n in enumerate(nt_names)}
    aug = len(nt_names)
    prods: list[tuple[int, tuple[int, ...]]] = [(aug, (nt_index[order[0]],))]
    for name in order:
        for lineno, alt in rules[name]:
            rhs: list[int] = []
            for tok in alt:
                if tok[0] == "name":
                    ref = tok[1]
                    if ref not in nt_index:
                        raise UndeclaredSymbolError(ref, lineno)
                    rhs.append(nt_index[ref])
                else:
                    rhs.extend(_term(b) for b in tok[1])
            prods.append((nt_index[name], tuple(rhs)))
    names_with_aug = nt_names + ["<start>"]
    return Grammar(names_with_aug, prods, nt_index[order[0]])
