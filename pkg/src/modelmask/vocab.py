"""Token vocabularies: byte-string tokens, id <-> text codecs, and token masks.

Tokens are arbitrary byte strings; the engine never assumes any alignment
between tokens and grammar terminals. The end-of-sequence token is the unique
token with empty bytes and is only legal as the final element of a sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class VocabularyError(ValueError):
    pass


class DuplicateTokenError(VocabularyError):
    pass


class MissingEosError(VocabularyError):
    pass


class MultipleEosError(VocabularyError):
    pass


class EmptyTokenError(VocabularyError):
    pass


class UnencodableError(VocabularyError):
    def __init__(self, position: int, context: bytes):
        self.position = position
        super().__init__(f"no token matches input at byte {position}: {context[:16]!r}")


class IdOutOfRangeError(VocabularyError):
    pass


class EosNotFinalError(VocabularyError):
    pass


class _TrieNode:
    __slots__ = ("children", "token_ids")

    def __init__(self) -> None:
        self.children: dict[int, _TrieNode] = {}
        self.token_ids: list[int] = []


@dataclass(frozen=True)
class Vocabulary:
    """Immutable token table. Index in ``tokens`` is the token id."""

    tokens: tuple[bytes, ...]
    eos_id: int
    _trie: _TrieNode = field(repr=False, compare=False, default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        seen: dict[bytes, int] = {}
        for tid, tok in enumerate(self.tokens):
            if tok in seen:
                raise DuplicateTokenError(f"tokens {seen[tok]} and {tid} share bytes {tok!r}")
            seen[tok] = tid
            if tid != self.eos_id and not tok:
                raise EmptyTokenError(f"token {tid} is empty but is not the eos token")
        if not (0 <= self.eos_id < len(self.tokens)):
            raise MissingEosError("eos id out of range")
        if self.tokens[self.eos_id] != b"":
            raise MissingEosError("eos token must have empty bytes")
        trie = _TrieNode()
        for tid, tok in enumerate(self.tokens):
            if tid == self.eos_id:
                continue
            node = trie
            for byte in tok:
                nxt = node.children.get(byte)
                if nxt is None:
                    nxt = _TrieNode()
                    node.children[byte] = nxt
                node = nxt
            node.token_ids.append(tid)
        object.__setattr__(self, "_trie", trie)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def size(self) -> int:
        return len(self.tokens)

    def trie_root(self) -> _TrieNode:
        """Prefix trie over non-eos tokens; shared by mask computation."""
        return self._trie

    def token_bytes(self, token_id: int) -> bytes:
        if not (0 <= token_id < len(self.tokens)):
            raise IdOutOfRangeError(f"token id {token_id} out of range 0..{len(self.tokens) - 1}")
        return self.tokens[token_id]

    def id_of(self, token: bytes) -> int:
        try:
            return self.tokens.index(token)
        except ValueError:
            raise KeyError(f"token {token!r} not in vocabulary") from None


class TokenMask:
    """Per-step bitset over the vocabulary marking sampleable tokens."""

    __slots__ = ("bits",)

    def __init__(self, size: int, fill: bool = False):
        self.bits = bytearray([1 if fill else 0]) * size

    def __len__(self) -> int:
        return len(self.bits)

    def allow(self, token_id: int) -> None:
        self.bits[token_id] = 1

    def forbid(self, token_id: int) -> None:
        self.bits[token_id] = 0

    def is_allowed(self, token_id: int) -> bool:
        return bool(self.bits[token_id])

    def allowed_ids(self) -> list[int]:
        return [i for i, b in enumerate(self.bits) if b]

    def count(self) -> int:
        return sum(self.bits)

    def is_subset_of(self, other: "TokenMask") -> bool:
        return all(not a or b for a, b in zip(self.bits, other.bits))

    def copy(self) -> "TokenMask":
        m = TokenMask(len(self.bits))
        m.bits[:] = self.bits
        return m


def _unquote(raw: str, lineno: int) -> bytes:
    """Parse one double-quoted token literal with C-style escapes."""
    if len(raw) < 2 or raw[0] != '"' or raw[-1] != '"':
        raise VocabularyError(f"line {lineno}: token must be a double-quoted string: {raw!r}")
    body = raw[1:-1]
    out = bytearray()
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            if i + 1 >= len(body):
                raise VocabularyError(f"line {lineno}: dangling escape")
            esc = body[i + 1]
            if esc == "n":
                out.append(0x0A)
            elif esc == "t":
                out.append(0x09)
            elif esc == "r":
                out.append(0x0D)
            elif esc == "0":
                out.append(0x00)
            elif esc == "\\":
                out.append(0x5C)
            elif esc == '"':
                out.append(0x22)
            elif esc == "x":
                hexpart = body[i + 2 : i + 4]
                if len(hexpart) != 2:
                    raise VocabularyError(f"line {lineno}: bad \\x escape")
                try:
                    out.append(int(hexpart, 16))
                except ValueError:
                    raise VocabularyError(f"line {lineno}: bad \\x escape") from None
                i += 4
                continue
            else:
                raise VocabularyError(f"line {lineno}: unknown escape \\{esc}")
            i += 2
        elif ch == '"':
            raise VocabularyError(f"line {lineno}: unescaped quote inside token")
        else:
            out.extend(ch.encode("utf-8"))
            i += 1
    return bytes(out)


def quote_token(token: bytes) -> str:
    """Inverse of the description-document escape syntax."""
    out = ['"']
    for byte in token:
        ch = chr(byte)
        if ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        elif ch == "\r":
            out.append("\\r")
        elif ch == "\\":
            out.append("\\\\")
        elif ch == '"':
            out.append('\\"')
        elif 0x20 <= byte < 0x7F:
            out.append(ch)
        else:
            out.append(f"\\x{byte:02x}")
    out.append('"')
    return "".join(out)


def load_vocabulary(doc: str) -> Vocabulary:
    """Build a Vocabulary from its description document.

    One token per line as a quoted escaped byte string; the line holding the
    literal directive ``#eos`` declares the end-of-sequence token at that id.
    """
    tokens: list[bytes] = []
    eos_id: int | None = None
    for lineno, line in enumerate(doc.splitlines()):
        line = line.strip()
        if not line:
            continue
        if line == "#eos":
            if eos_id is not None:
                raise MultipleEosError(f"line {lineno}: second #eos directive")
            eos_id = len(tokens)
            tokens.append(b"")
            continue
        tokens.append(_unquote(line, lineno))
    if eos_id is None:
        raise MissingEosError("vocabulary document declares no #eos entry")
    return Vocabulary(tuple(tokens), eos_id)


def dump_vocabulary(v: Vocabulary) -> str:
    lines = []
    for tid, tok in enumerate(v.tokens):
        lines.append("#eos" if tid == v.eos_id else quote_token(tok))
    return "\n".join(lines) + "\n"


def encode(v: Vocabulary, text: bytes) -> list[int]:
    """Greedy longest-match segmentation of ``text`` into token ids."""
    ids: list[int] = []
    pos = 0
    root = v.trie_root()
    n = len(text)
    while pos < n:
        node = root
        best: int | None = None
        best_end = pos
        i = pos
        while i < n:
            node = node.children.get(text[i])
            if node is None:
                break
            i += 1
            if node.token_ids:
                best = node.token_ids[0]
                best_end = i
        if best is None:
            raise UnencodableError(pos, text[pos:])
        ids.append(best)
        pos = best_end
    return ids


def decode(v: Vocabulary, ids: list[int]) -> bytes:
    out = bytearray()
    for i, tid in enumerate(ids):
        if not (0 <= tid < len(v.tokens)):
            raise IdOutOfRangeError(f"token id {tid} out of range")
        if tid == v.eos_id and i != len(ids) - 1:
            raise EosNotFinalError(f"eos at position {i} of {len(ids)}")
        out.extend(v.tokens[tid])
    return bytes(out)
