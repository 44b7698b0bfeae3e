#!/usr/bin/env python3
"""Regenerate the bundled fixture files (deterministic).

Writes the grammar/vocabulary/metamodel/constraint documents, six scenes,
a 60-task suite with gold programs and answers, and the n-gram training
corpus into src/modelmask/fixtures/clevr/.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from modelmask.clevr import (  # noqa: E402
    PARAM_DOMAINS,
    Scene,
    SceneObject,
    clevr_assets,
    constraints_doc,
    execute,
    grammar_doc,
    load_scene,
    metamodel_doc,
    parse_program,
    render_answer,
    scene_doc,
    vocabulary_doc,
)
from modelmask.clevr import RuntimeNonUniqueError  # noqa: E402
from modelmask.semantics import validate_complete  # noqa: E402

OUT = ROOT / "src" / "modelmask" / "fixtures" / "clevr"
N_SCENES = 6
TASKS_PER_SCENE = 10
CORPUS_SIZE = 50


def make_scene(rng: np.random.Generator) -> Scene:
    n = int(rng.integers(3, 7))
    objects = [
        SceneObject(
            color=str(rng.choice(PARAM_DOMAINS["color"])),
            shape=str(rng.choice(PARAM_DOMAINS["shape"])),
            size=str(rng.choice(PARAM_DOMAINS["size"])),
            material=str(rng.choice(PARAM_DOMAINS["material"])),
        )
        for _ in range(n)
    ]
    xs = rng.permutation(n)
    ys = rng.permutation(n)
    rels = {
        "left": tuple(tuple(sorted(j for j in range(n) if xs[j] < xs[i])) for i in range(n)),
        "right": tuple(tuple(sorted(j for j in range(n) if xs[j] > xs[i])) for i in range(n)),
        "behind": tuple(tuple(sorted(j for j in range(n) if ys[j] < ys[i])) for i in range(n)),
        "front": tuple(tuple(sorted(j for j in range(n) if ys[j] > ys[i])) for i in range(n)),
    }
    return Scene(tuple(objects), rels)


def _filter(rng, var_in, var_out):
    domain = str(rng.choice(("color", "shape", "size", "material")))
    value = str(rng.choice(PARAM_DOMAINS[domain]))
    text = f"{var_out} = filter_{domain}[{value}]({var_in})\n"
    prompt = f"{domain} {value}"
    return text, prompt


def gen_program(rng: np.random.Generator) -> tuple[str, str]:
    """One random program template; returns (program text, prompt text)."""
    kind = int(rng.integers(0, 8))
    if kind == 0:
        f, p = _filter(rng, "v0", "v1")
        return f"v0 = scene()\n{f}v2 = count(v1)\n", f"how many {p} things are there?"
    if kind == 1:
        f1, p1 = _filter(rng, "v0", "v1")
        f2, p2 = _filter(rng, "v1", "v2")
        return (
            f"v0 = scene()\n{f1}{f2}v3 = exist(v2)\n",
            f"are there any {p1} {p2} things?",
        )
    if kind == 2:
        f1, p1 = _filter(rng, "v0", "v1")
        f2, p2 = _filter(rng, "v1", "v2")
        attr = str(rng.choice(("color", "shape", "size", "material")))
        return (
            f"v0 = scene()\n{f1}{f2}v3 = unique(v2)\nv4 = query_{attr}(v3)\n",
            f"what {attr} is the {p1} {p2} thing?",
        )
    if kind == 3:
        f1, p1 = _filter(rng, "v0", "v1")
        f2, p2 = _filter(rng, "v1", "v2")
        direction = str(rng.choice(PARAM_DOMAINS["direction"]))
        return (
            f"v0 = scene()\n{f1}{f2}v3 = unique(v2)\nv4 = relate[{direction}](v3)\nv5 = count(v4)\n",
            f"how many things are {direction} of the {p1} {p2} thing?",
        )
    if kind == 4:
        f1, p1 = _filter(rng, "v0", "v1")
        f2, p2 = _filter(rng, "v0", "v2")
        op = str(rng.choice(("intersect", "union")))
        return (
            f"v0 = scene()\n{f1}{f2}v3 = {op}(v1,v2)\nv4 = count(v3)\n",
            f"how many things are {p1} {op} {p2}?",
        )
    if kind == 5:
        f1, p1 = _filter(rng, "v0", "v1")
        f2, p2 = _filter(rng, "v0", "v2")
        cmp_op = str(rng.choice(("greater_than", "less_than", "equal_integer")))
        return (
            f"v0 = scene()\n{f1}v3 = count(v1)\n{f2}v4 = count(v2)\nv5 = {cmp_op}(v3,v4)\n",
            f"{cmp_op} comparing {p1} things and {p2} things?",
        )
    if kind == 6:
        f1, p1 = _filter(rng, "v0", "v1")
        f2, p2 = _filter(rng, "v1", "v2")
        attr = str(rng.choice(("color", "shape", "size", "material")))
        return (
            f"v0 = scene()\n{f1}{f2}v3 = unique(v2)\nv4 = same_{attr}(v3)\nv5 = count(v4)\n",
            f"how many other things share the {attr} of the {p1} {p2} thing?",
        )
    f1, p1 = _filter(rng, "v0", "v1")
    f2, p2 = _filter(rng, "v0", "v3")
    attr = str(rng.choice(("color", "shape", "size", "material")))
    return (
        f"v0 = scene()\n{f1}v2 = unique(v1)\n{f2}v4 = unique(v3)\n"
        f"v5 = query_{attr}(v2)\nv6 = query_{attr}(v4)\nv7 = equal_{attr}(v5,v6)\n",
        f"do the {p1} thing and the {p2} thing have the same {attr}?",
    )


def main() -> None:
    assets = clevr_assets()
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "scenes").mkdir(exist_ok=True)

    (OUT / "grammar.ebnf").write_text(grammar_doc())
    (OUT / "vocab.txt").write_text(vocabulary_doc())
    (OUT / "metamodel.json").write_text(metamodel_doc())
    (OUT / "constraints.json").write_text(constraints_doc())

    rng = np.random.default_rng(20260810)
    scenes = []
    for i in range(N_SCENES):
        scene = make_scene(rng)
        scenes.append(scene)
        (OUT / "scenes" / f"scene{i:02d}.json").write_text(scene_doc(scene))

    tasks = []
    gold_programs = []
    for i, scene in enumerate(scenes):
        made = 0
        while made < TASKS_PER_SCENE:
            program, prompt = gen_program(rng)
            report = validate_complete(
                program, assets.grammar, assets.metamodel, assets.constraints, assets.projector
            )
            if not report.semantic:
                continue
            try:
                answer = render_answer(execute(parse_program(program), scene))
            except RuntimeNonUniqueError:
                continue
            tid = f"t{i:02d}_{made:02d}"
            tasks.append(
                {
                    "id": tid,
                    "prompt": prompt,
                    "gold_program": program,
                    "scene": f"scenes/scene{i:02d}.json",
                    "gold_answer": answer,
                }
            )
            gold_programs.append(program)
            made += 1

    (OUT / "suite.json").write_text(json.dumps(tasks, indent=2) + "\n")
    corpus_lines = [p.replace("\n", "\\n") for p in gold_programs[:CORPUS_SIZE]]
    (OUT / "corpus.txt").write_text("\n".join(corpus_lines) + "\n")
    print(f"wrote {len(tasks)} tasks, {N_SCENES} scenes to {OUT}")


if __name__ == "__main__":
    main()
