"""The guided decoding loop.

Each step scores the vocabulary, filters it syntactically (recognizer
liveness) and, in semantic mode, re-filters by tentatively refining the
partial model per candidate token and rejecting refinements that are
definitely doomed; eos is additionally gated by the completion check. The
surviving distribution is sampled and the winner committed.

Everything a step consults is an immutable snapshot, so per-candidate
checks are independent; the loop itself is sequential.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import grammar as _grammar
from .clevr import AssetBundle
from .partial_model import AddNode, ERROR, PartialModel, apply_delta, empty_model, has_error
from .projector import ParseEvent
from .semantics import NotCompleteError, eval_completion, eval_safety
from .vocab import TokenMask

MODES = ("none", "syntactic", "semantic")


class EmptyMaskError(ValueError):
    pass


@dataclass(frozen=True)
class DecoderConfig:
    mode: str = "semantic"
    temperature: float = 0.0  # 0 = greedy
    top_k: int | None = None
    max_tokens: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class StepTrace:
    prefix_len: int
    syntax_allowed: int
    semantic_allowed: int
    chosen: int
    rejections: tuple[tuple[int, str], ...] = ()


@dataclass
class DecodeResult:
    tokens: list[int]
    text: bytes
    status: str  # Completed | NoValidToken | MaxTokens
    final_model: PartialModel
    traces: list[StepTrace]
    step_times: list[float]

    @property
    def completed(self) -> bool:
        return self.status == "Completed"


@dataclass
class DecoderState:
    """Mutable loop state; advance it with :func:`decode_step`."""

    cfg: DecoderConfig
    assets: AssetBundle
    provider: object
    rng: np.random.Generator
    tokens: list[int] = field(default_factory=list)
    rec: object = None
    ps: object = None
    model: PartialModel = None
    status: str | None = None
    derailed: bool = False  # unguided decode left the grammar; model is frozen
    traces: list[StepTrace] = field(default_factory=list)
    step_times: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.rec is None:
            self.rec = _grammar.initial_state(self.assets.grammar)
        if self.model is None:
            ps, delta = self.assets.projector.project_init(self.assets.metamodel)
            self.ps = ps
            self.model = apply_delta(empty_model(self.assets.metamodel), delta)


def sample(dist: np.ndarray, mask: TokenMask, cfg: DecoderConfig, rng: np.random.Generator) -> int:
    """Pick a token among allowed entries: greedy argmax (ties take the
    smallest id) or seeded softmax sampling at temperature > 0."""
    allowed = mask.allowed_ids()
    if not allowed:
        raise EmptyMaskError("no token is allowed by the mask")
    if cfg.temperature == 0.0:
        best = allowed[0]
        best_score = dist[best]
        for tid in allowed[1:]:
            if dist[tid] > best_score:
                best = tid
                best_score = dist[tid]
        return best
    if cfg.top_k is not None and cfg.top_k < len(allowed):
        ranked = sorted(allowed, key=lambda t: (-dist[t], t))
        allowed = sorted(ranked[: cfg.top_k])
    scores = np.array([dist[t] for t in allowed]) / cfg.temperature
    scores -= scores.max()
    probs = np.exp(scores)
    probs /= probs.sum()
    return int(allowed[int(rng.choice(len(allowed), p=probs))])


def _consumed_event(ps, nbytes: int) -> list[ParseEvent]:
    pos = getattr(ps, "pos", -1)
    return [ParseEvent("consumed", None, pos, pos + nbytes if pos >= 0 else -1)]


def decode_step(state: DecoderState) -> str:
    """Run one decoding step; returns the post-step status
    ("running", "Completed", "NoValidToken", or "MaxTokens")."""
    if state.status is not None:
        return state.status
    assets = state.assets
    cfg = state.cfg
    vocab = assets.vocabulary
    eos = vocab.eos_id
    started = time.perf_counter()

    dist = state.provider.next_distribution(state.tokens)

    candidate_cache: dict[int, tuple] = {}
    rejections: list[tuple[int, str]] = []
    if cfg.mode == "none":
        mask = TokenMask(len(vocab), fill=True)
        syntax_count = semantic_count = len(vocab)
        states = {}
    else:
        if state.rec.dead:
            state.status = "NoValidToken"
            return state.status
        mask, states = _grammar.mask_with_states(state.rec, vocab)
        syntax_count = mask.count()
        if cfg.mode == "semantic":
            projector = state.assets.projector
            for tid in mask.allowed_ids():
                if tid == eos:
                    if has_error(state.model):
                        reason = "error"
                    else:
                        try:
                            verdict = eval_completion(state.model, assets.constraints, assets.metamodel)
                            reason = None if verdict.ok else verdict.violations[0].constraint
                        except NotCompleteError:
                            reason = "incomplete"
                    if reason is not None:
                        mask.forbid(tid)
                        rejections.append((tid, reason))
                    continue
                token_bytes = vocab.tokens[tid]
                ps2, delta = projector.project_token(
                    state.ps, state.model, _consumed_event(state.ps, len(token_bytes)), token_bytes
                )
                poison = next(
                    (op for op in delta if isinstance(op, AddNode) and op.truth is ERROR), None
                )
                if poison is not None:
                    reason = dict(poison.attrs).get("reason", "error")
                    mask.forbid(tid)
                    rejections.append((tid, str(reason)))
                    continue
                if not delta:
                    candidate_cache[tid] = (ps2, state.model)
                    continue
                pm2 = apply_delta(state.model, delta)
                verdict = eval_safety(pm2, assets.constraints, assets.metamodel)
                if not verdict.ok:
                    mask.forbid(tid)
                    rejections.append((tid, verdict.violations[0].constraint))
                    continue
                candidate_cache[tid] = (ps2, pm2)
        semantic_count = mask.count()
        if semantic_count == 0:
            state.status = "NoValidToken"
            state.traces.append(
                StepTrace(len(state.tokens), syntax_count, 0, -1, tuple(rejections))
            )
            return state.status

    chosen = sample(dist, mask, cfg, state.rng)
    token_bytes = vocab.tokens[chosen]

    if chosen != eos and token_bytes:
        if cfg.mode == "none":
            if not state.derailed:
                rec2 = _grammar.advance(state.rec, token_bytes)
                if rec2.dead:
                    state.derailed = True
                    state.rec = rec2
                else:
                    ps2, delta = assets.projector.project_token(
                        state.ps, state.model, _consumed_event(state.ps, len(token_bytes)), token_bytes
                    )
                    state.rec = rec2
                    state.ps = ps2
                    state.model = apply_delta(state.model, delta)
        else:
            cached = candidate_cache.get(chosen)
            if cached is not None:
                state.ps, state.model = cached
            else:
                ps2, delta = assets.projector.project_token(
                    state.ps, state.model, _consumed_event(state.ps, len(token_bytes)), token_bytes
                )
                state.ps = ps2
                state.model = apply_delta(state.model, delta)
            state.rec = states[chosen]

    state.tokens.append(chosen)
    state.step_times.append(time.perf_counter() - started)
    state.traces.append(
        StepTrace(len(state.tokens) - 1, syntax_count, semantic_count, chosen, tuple(rejections))
    )

    if chosen == eos:
        state.status = "Completed"
    elif len(state.tokens) >= cfg.max_tokens:
        state.status = "MaxTokens"
    return state.status or "running"


def run_decode(cfg: DecoderConfig, assets: AssetBundle, provider) -> DecodeResult:
    """Decode from the empty prefix until eos, a dead end, or the token cap."""
    state = DecoderState(cfg, assets, provider, np.random.default_rng(cfg.seed))
    while state.status is None:
        decode_step(state)
    from .vocab import decode as _decode

    return DecodeResult(
        tokens=state.tokens,
        text=_decode(assets.vocabulary, state.tokens),
        status=state.status,
        final_model=state.model,
        traces=state.traces,
        step_times=state.step_times,
    )
