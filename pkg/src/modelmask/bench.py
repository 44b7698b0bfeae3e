"""Benchmark harness: decode a task suite under several guidance modes and
aggregate syntactic validity, semantic validity, answer accuracy, and
relative per-token time into a small CSV report.

Outputs that do not reach eos count as invalid and incorrect, and invalid
programs are never executed. All decode seeds derive from the base seed,
the mode, and the task id, so a rerun with identical flags reproduces the
report byte for byte (timing is measured wall time and only reported when
enabled; disable it for byte-stable output).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .clevr import (
    AssetBundle,
    RuntimeNonUniqueError,
    Scene,
    execute,
    load_scene,
    parse_program,
    render_answer,
)
from .decoder import DecoderConfig, run_decode
from .providers import NgramProvider, NoisyGoldProvider, RandomProvider
from .semantics import validate_complete
from .vocab import encode


class SuiteError(ValueError):
    pass


@dataclass(frozen=True)
class Task:
    id: str
    prompt: str
    gold_program: str
    scene_path: str
    gold_answer: str


@dataclass(frozen=True)
class MetricsRow:
    mode: str
    syn_pct: float
    sem_pct: float
    acc_pct: float
    time_ratio: float


@dataclass(frozen=True)
class TaskRecord:
    task_id: str
    mode: str
    status: str
    syntactic: bool
    semantic: bool
    correct: bool
    answer: str | None
    text: str
    tokens: int
    mean_step_time: float


def load_suite(path) -> list[Task]:
    base = Path(path).parent
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    tasks = []
    for i, spec in enumerate(data):
        try:
            tasks.append(
                Task(
                    id=str(spec["id"]),
                    prompt=spec.get("prompt", ""),
                    gold_program=spec["gold_program"],
                    scene_path=str(base / spec["scene"]),
                    gold_answer=str(spec["gold_answer"]),
                )
            )
        except KeyError as exc:
            raise SuiteError(f"task {i}: missing field {exc}") from None
    ids = [t.id for t in tasks]
    if len(ids) != len(set(ids)):
        raise SuiteError("duplicate task ids in suite")
    return tasks


def validate_suite(tasks: list[Task], assets: AssetBundle) -> None:
    """Check every gold program is valid and reproduces its gold answer."""
    bad: list[str] = []
    scenes: dict[str, Scene] = {}
    for task in tasks:
        report = validate_complete(
            task.gold_program, assets.grammar, assets.metamodel, assets.constraints, assets.projector
        )
        if not report.semantic:
            bad.append(f"{task.id}: gold program invalid")
            continue
        scene = scenes.get(task.scene_path)
        if scene is None:
            with open(task.scene_path, "r", encoding="utf-8") as fh:
                scene = load_scene(fh.read())
            scenes[task.scene_path] = scene
        try:
            answer = render_answer(execute(parse_program(task.gold_program), scene))
        except RuntimeNonUniqueError:
            bad.append(f"{task.id}: gold program not executable on its scene")
            continue
        if answer != task.gold_answer:
            bad.append(f"{task.id}: gold answer {task.gold_answer!r} but execution gives {answer!r}")
    if bad:
        raise SuiteError("suite validation failed:\n  " + "\n  ".join(bad))


def _derived_seed(base_seed: int, mode: str, task_id: str) -> int:
    digest = hashlib.sha256(f"{base_seed}:{mode}:{task_id}".encode()).digest()
    return int.from_bytes(digest[:6], "big")


def make_provider(spec: str, assets: AssetBundle, task: Task, seed: int):
    """Provider factory for suite runs; noisy_gold conditions on the task."""
    kind, _, rest = spec.partition(":")
    opts: dict[str, str] = {}
    if rest:
        for chunk in rest.split(","):
            key, _, value = chunk.partition("=")
            opts[key.strip()] = value.strip()
    if kind == "noisy_gold":
        gold_ids = encode(assets.vocabulary, task.gold_program.encode())
        return NoisyGoldProvider(assets.vocabulary, gold_ids, float(opts.get("eps", 0.15)), seed)
    if kind == "random":
        return RandomProvider(assets.vocabulary, seed)
    if kind == "ngram":
        with open(opts["path"], "r", encoding="utf-8") as fh:
            corpus = fh.read()
        return NgramProvider.from_corpus(
            assets.vocabulary, corpus, int(opts.get("order", 3)), float(opts.get("alpha", 1.0))
        )
    raise ValueError(f"unsupported suite provider {kind!r}")


def run_suite(
    assets: AssetBundle,
    tasks: list[Task],
    modes: list[str],
    provider_spec: str = "noisy_gold:eps=0.15",
    seed: int = 0,
    max_tokens: int = 512,
    timing: str = "wall",
    warmup: int = 2,
) -> tuple[list[MetricsRow], list[TaskRecord]]:
    validate_suite(tasks, assets)
    scenes: dict[str, Scene] = {}
    records: list[TaskRecord] = []
    per_mode_time: dict[str, float] = {}

    for mode in modes:
        step_time_total = 0.0
        step_count = 0
        for idx, task in enumerate(tasks):
            task_seed = _derived_seed(seed, mode, task.id)
            provider = make_provider(provider_spec, assets, task, task_seed)
            cfg = DecoderConfig(mode=mode, max_tokens=max_tokens, seed=task_seed)
            result = run_decode(cfg, assets, provider)
            if idx >= warmup and result.step_times:
                step_time_total += sum(result.step_times)
                step_count += len(result.step_times)

            syntactic = semantic = correct = False
            answer: str | None = None
            if result.completed:
                report = validate_complete(
                    result.text, assets.grammar, assets.metamodel, assets.constraints, assets.projector
                )
                syntactic = report.syntactic
                semantic = report.semantic
                if semantic:
                    scene = scenes.get(task.scene_path)
                    if scene is None:
                        with open(task.scene_path, "r", encoding="utf-8") as fh:
                            scene = load_scene(fh.read())
                        scenes[task.scene_path] = scene
                    try:
                        answer = render_answer(execute(parse_program(result.text.decode()), scene))
                        correct = answer == task.gold_answer
                    except RuntimeNonUniqueError:
                        answer = None
                        correct = False
            mean_step = sum(result.step_times) / len(result.step_times) if result.step_times else 0.0
            records.append(
                TaskRecord(
                    task_id=task.id,
                    mode=mode,
                    status=result.status,
                    syntactic=syntactic,
                    semantic=semantic,
                    correct=correct,
                    answer=answer,
                    text=result.text.decode("utf-8", "replace"),
                    tokens=len(result.tokens),
                    mean_step_time=mean_step,
                )
            )
        per_mode_time[mode] = step_time_total / step_count if step_count else 0.0

    rows: list[MetricsRow] = []
    n = len(tasks)
    base_time = per_mode_time.get("none", 0.0)
    for mode in modes:
        mode_records = [r for r in records if r.mode == mode]
        syn = 100.0 * sum(r.syntactic for r in mode_records) / n
        sem = 100.0 * sum(r.semantic for r in mode_records) / n
        acc = 100.0 * sum(r.correct for r in mode_records) / n
        if timing != "wall":
            ratio = 1.0
        elif mode == "none":
            ratio = 1.0
        elif base_time > 0:
            ratio = per_mode_time[mode] / base_time
        else:
            ratio = 1.0
        rows.append(MetricsRow(mode, syn, sem, acc, ratio))
    return rows, records


def emit_report(rows: list[MetricsRow]) -> str:
    lines = ["mode,syn,sem,acc,time_ratio"]
    for row in rows:
        lines.append(
            f"{row.mode},{row.syn_pct:.2f},{row.sem_pct:.2f},{row.acc_pct:.2f},{row.time_ratio:.2f}"
        )
    return "\n".join(lines) + "\n"


def emit_records(records: list[TaskRecord]) -> str:
    lines = []
    for r in records:
        lines.append(
            json.dumps(
                {
                    "task": r.task_id,
                    "mode": r.mode,
                    "status": r.status,
                    "syntactic": r.syntactic,
                    "semantic": r.semantic,
                    "correct": r.correct,
                    "answer": r.answer,
                    "tokens": r.tokens,
                    "mean_step_time": round(r.mean_step_time, 9),
                    "text": r.text,
                },
                sort_keys=True,
            )
        )
    return "\n".join(lines) + "\n"
