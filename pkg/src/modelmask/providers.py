"""Next-token score providers.

A provider maps a token-id prefix to a vector of unnormalized log-scores
over the vocabulary (one entry per token id, all finite). Normalization
happens in the sampler after masking. Stochastic providers derive all
randomness from their seed plus the query, so identical configuration and
prefix always yield identical scores regardless of call order.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np
import requests

from .vocab import Vocabulary, encode


class ProviderFailure(RuntimeError):
    pass


class TransportError(ProviderFailure):
    pass


class RemoteError(ProviderFailure):
    pass


class LengthMismatchError(ProviderFailure):
    pass


class NonFiniteError(ProviderFailure):
    pass


class UnencodableCorpusError(ValueError):
    def __init__(self, lineno: int, cause: Exception):
        self.lineno = lineno
        super().__init__(f"corpus line {lineno} is not encodable: {cause}")


def check_distribution(scores: np.ndarray, vocab_size: int) -> np.ndarray:
    if scores.shape != (vocab_size,):
        raise LengthMismatchError(f"expected {vocab_size} scores, got {scores.shape}")
    if not np.all(np.isfinite(scores)):
        raise NonFiniteError("distribution contains non-finite scores")
    return scores


def _entropy(*parts: int) -> np.random.Generator:
    return np.random.default_rng(tuple(abs(int(p)) for p in parts))


def _hash_prefix(prefix) -> int:
    raw = b",".join(str(i).encode() for i in prefix)
    return int.from_bytes(hashlib.blake2b(raw, digest_size=8).digest(), "big")


class Provider:
    """Base: subclasses implement _scores(prefix) -> np.ndarray."""

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab

    def next_distribution(self, prefix) -> np.ndarray:
        if self.vocab.eos_id in prefix:
            raise ValueError("prefix must not contain the eos token")
        return check_distribution(np.asarray(self._scores(tuple(prefix)), dtype=np.float64), len(self.vocab))

    def _scores(self, prefix: tuple[int, ...]) -> np.ndarray:
        raise NotImplementedError


class RandomProvider(Provider):
    """Seeded noise; argmax is uniform-ish over the vocabulary per prefix."""

    def __init__(self, vocab: Vocabulary, seed: int):
        super().__init__(vocab)
        self.seed = seed

    def _scores(self, prefix):
        rng = _entropy(self.seed, 0x52414E44, _hash_prefix(prefix))
        return rng.standard_normal(len(self.vocab))


class ScriptedProvider(Provider):
    """Score table keyed by exact prefix; unlisted prefixes score uniformly.

    File lines look like ``"0 3 7" -> 2:5.0, 9:1.5``; the quoted part is the
    space-joined prefix ids.
    """

    def __init__(self, vocab: Vocabulary, table: dict[tuple[int, ...], dict[int, float]]):
        super().__init__(vocab)
        self.table = table

    @classmethod
    def from_text(cls, vocab: Vocabulary, text: str) -> "ScriptedProvider":
        table: dict[tuple[int, ...], dict[int, float]] = {}
        for lineno, line in enumerate(text.splitlines()):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                key_part, rest = line.split("->", 1)
                key_part = key_part.strip()
                if not (key_part.startswith('"') and key_part.endswith('"')):
                    raise ValueError("prefix must be quoted")
                ids = tuple(int(t) for t in key_part[1:-1].split())
                scores: dict[int, float] = {}
                for chunk in rest.split(","):
                    chunk = chunk.strip()
                    if not chunk:
                        continue
                    tid, val = chunk.split(":")
                    scores[int(tid)] = float(val)
            except ValueError as exc:
                raise ValueError(f"scripted provider line {lineno}: {exc}") from None
            table[ids] = scores
        return cls(vocab, table)

    def _scores(self, prefix):
        out = np.zeros(len(self.vocab))
        for tid, val in self.table.get(prefix, {}).items():
            out[tid] = val
        return out


class NoisyGoldProvider(Provider):
    """Replays a gold token stream, corrupted per position with probability eps.

    At a corrupted position the top score lands on a token drawn uniformly
    from the vocabulary while the gold token keeps the runner-up score, so
    masking a corrupted peak recovers the intended continuation; past the
    end of the gold stream the intended token is eos. Corruption decisions
    depend only on (seed, position), so a masked corruption does not shift
    later decisions. A small noise floor keeps scores tie-free.
    """

    PEAK = 8.0
    RUNNER_UP = 4.0
    NOISE = 0.01

    def __init__(self, vocab: Vocabulary, gold_ids, eps: float, seed: int):
        if not 0.0 <= eps <= 1.0:
            raise ValueError(f"eps must be within [0, 1], got {eps}")
        super().__init__(vocab)
        self.gold_ids = tuple(gold_ids)
        self.eps = eps
        self.seed = seed

    def _scores(self, prefix):
        k = len(prefix)
        gold = self.gold_ids[k] if k < len(self.gold_ids) else self.vocab.eos_id
        target = gold
        rng = _entropy(self.seed, 0x474F4C44, k)
        corrupt = rng.random() < self.eps
        out = rng.standard_normal(len(self.vocab)) * self.NOISE
        if corrupt:
            target = int(rng.integers(0, len(self.vocab)))
            out[gold] += self.RUNNER_UP
        out[target] += self.PEAK
        return out


class NgramProvider(Provider):
    """Order-k counts with add-alpha smoothing over token ids.

    The context is the last k-1 prefix ids; shorter prefixes use the whole
    prefix as context (counts for all shorter orders are collected during
    training). Unseen contexts smooth to uniform.
    """

    def __init__(self, vocab: Vocabulary, order: int, alpha: float):
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        if alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {alpha}")
        super().__init__(vocab)
        self.order = order
        self.alpha = alpha
        self.counts: dict[tuple[int, ...], np.ndarray] = {}

    @classmethod
    def from_corpus(cls, vocab: Vocabulary, corpus_text: str, order: int, alpha: float) -> "NgramProvider":
        provider = cls(vocab, order, alpha)
        size = len(vocab)
        for lineno, line in enumerate(corpus_text.split("\n")):
            if not line:
                continue
            try:
                ids = encode(vocab, line.encode("utf-8").replace(b"\\n", b"\n"))
            except ValueError as exc:
                raise UnencodableCorpusError(lineno, exc) from None
            ids.append(vocab.eos_id)
            for pos, tid in enumerate(ids):
                for ctx_len in range(min(order - 1, pos) + 1):
                    ctx = tuple(ids[pos - ctx_len : pos])
                    row = provider.counts.get(ctx)
                    if row is None:
                        row = np.zeros(size)
                        provider.counts[ctx] = row
                    row[tid] += 1
        return provider

    def _scores(self, prefix):
        ctx_len = min(self.order - 1, len(prefix))
        ctx = prefix[len(prefix) - ctx_len :]
        row = self.counts.get(ctx)
        counts = row if row is not None else np.zeros(len(self.vocab))
        probs = (counts + self.alpha) / (counts.sum() + self.alpha * len(self.vocab))
        return np.log(probs)


class HttpProvider(Provider):
    """Client for an external logits service.

    Wire protocol: POST ``<url>/v1/logits`` with ``{"tokens": [ids]}``;
    success is a 200 with ``{"logits": [floats]}`` of vocabulary length.
    """

    def __init__(self, vocab: Vocabulary, url: str, timeout_ms: int = 10000):
        super().__init__(vocab)
        self.url = url.rstrip("/")
        self.timeout_ms = timeout_ms

    def _scores(self, prefix):
        try:
            resp = requests.post(
                f"{self.url}/v1/logits",
                json={"tokens": list(prefix)},
                timeout=self.timeout_ms / 1000.0,
            )
        except requests.RequestException as exc:
            raise TransportError(f"logits request failed: {exc}") from exc
        if resp.status_code != 200:
            try:
                message = resp.json().get("error", resp.text)
            except (ValueError, json.JSONDecodeError):
                message = resp.text
            raise RemoteError(f"logits service returned {resp.status_code}: {message}")
        try:
            payload = resp.json()
            logits = payload["logits"]
        except (ValueError, KeyError) as exc:
            raise RemoteError(f"malformed logits response: {exc}") from exc
        arr = np.asarray(logits, dtype=np.float64)
        if arr.shape != (len(self.vocab),):
            raise LengthMismatchError(f"expected {len(self.vocab)} logits, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("logits contain non-finite entries")
        return arr


def parse_provider_spec(spec: str, vocab: Vocabulary, default_seed: int = 0) -> Provider:
    """Build a provider from a CLI spec like ``random:seed=3`` or
    ``ngram:path=corpus.txt,order=3,alpha=1.0``."""
    kind, _, rest = spec.partition(":")
    opts: dict[str, str] = {}
    if rest:
        for chunk in rest.split(","):
            key, _, value = chunk.partition("=")
            opts[key.strip()] = value.strip()
    if kind == "random":
        return RandomProvider(vocab, int(opts.get("seed", default_seed)))
    if kind == "scripted":
        with open(opts["path"], "r", encoding="utf-8") as fh:
            return ScriptedProvider.from_text(vocab, fh.read())
    if kind == "ngram":
        with open(opts["path"], "r", encoding="utf-8") as fh:
            corpus = fh.read()
        return NgramProvider.from_corpus(
            vocab, corpus, int(opts.get("order", 3)), float(opts.get("alpha", 1.0))
        )
    if kind == "noisy_gold":
        with open(opts["gold"], "rb") as fh:
            gold_ids = encode(vocab, fh.read())
        return NoisyGoldProvider(
            vocab, gold_ids, float(opts.get("eps", 0.0)), int(opts.get("seed", default_seed))
        )
    if kind == "http":
        return HttpProvider(vocab, opts["url"], int(opts.get("timeout", 10000)))
    raise ValueError(f"unknown provider kind {kind!r}")
