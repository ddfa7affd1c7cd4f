"""Build the scripted-episode fixture for the console integration test.

Creates a one-episode manifest, a run-config for `qask serve-console`, and a
reference results file produced by running the identical episode against a
scripted oracle that gives the same answers the test will type into the UI.

Usage: python3 build_fixture.py WORKDIR
Prints a JSON blob with the paths the test needs.
"""

import json
import sys
from pathlib import Path

from PIL import Image

from qask import prompts
from qask.agents import AgentConfig
from qask.core import DescriptionSet, EpisodeSpec, Rsq, save_manifest
from qask.engine import EngineConfig, run_qask

ANSWERS = {
    "Is it red?": "No, it is blue.",
    "Is it large?": "Yes, it is quite large.",
}


def make_image(directory: Path, name: str, color) -> str:
    path = directory / f"{name}.png"
    Image.new("RGB", (4, 4), color).save(path)
    return str(path)


def build_episode(workdir: Path) -> EpisodeSpec:
    images = workdir / "images"
    images.mkdir()
    category = "bed"
    observations = tuple(
        make_image(images, f"obs{i}", (20 * (i + 1), 80, 120)) for i in range(5)
    )
    return EpisodeSpec(
        id="console-ep",
        category=category,
        target_image=make_image(images, "target", (10, 200, 10)),
        descriptions=DescriptionSet(
            category=category,
            cat_col=f"blue {category}",
            col_feat=f"blue patchwork {category}",
            ctx=f"{category} next to a wooden nightstand",
            col_ctx=f"blue {category} next to a wooden nightstand",
            col_ctx_feat=f"blue patchwork {category} near a wooden nightstand",
        ),
        observations=observations,
        split="test",
    )


def rsq(reasoning, score, question=None):
    return prompts.render_rsq(Rsq(reasoning, score, question))


def build(workdir: Path) -> dict:
    spec = build_episode(workdir)
    manifest = workdir / "manifest.json"
    save_manifest([spec], manifest)

    script = [
        rsq("unsure about the color", 1, "Is it red?"),
        rsq("not the target", 0),
        rsq("not the target", 0),
        rsq("not the target", 0),
        rsq("not the target", 0),
        rsq("unsure about the size", 1, "Is it large?"),
        rsq("this is the target", 2),
    ]
    questioner = {"id": "scripted-q", "kind": "scripted", "params": {"script": script}}

    run_dir = workdir / "bridge_run"
    run_config = {
        "manifest": str(manifest),
        "questioner": questioner,
        "level": "col_ctx_feat",
        "run_dir": str(run_dir),
        "oracle_id": "human",
        "oracle_params": {"human_timeout": 60},
    }
    run_config_path = workdir / "run_config.json"
    run_config_path.write_text(json.dumps(run_config), encoding="utf-8")

    reference_dir = workdir / "reference_run"
    oracle = AgentConfig(id="human", kind="scripted", params={"lookup": ANSWERS})
    run_qask([spec], AgentConfig.from_dict(questioner), [oracle], EngineConfig(),
             run_dir=reference_dir, workers=1)

    return {
        "runConfig": str(run_config_path),
        "runDir": str(run_dir),
        "referenceResults": str(reference_dir / "results.jsonl"),
        "answers": ANSWERS,
    }


if __name__ == "__main__":
    workdir = Path(sys.argv[1])
    workdir.mkdir(parents=True, exist_ok=True)
    print(json.dumps(build(workdir)))
