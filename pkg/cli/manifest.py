import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Union

from pydantic import BaseModel

from logs.log import logger

# argparse destinations that never influence output content
NON_REPRODUCIBLE = ("func", "log_level", "metrics_file", "jobs", "out")


class RunManifest(BaseModel):
    """Everything needed to reproduce a run; timings are informative only"""
    subcommand: str
    parameters: Dict[str, Any]
    input_digests: Dict[str, str]
    seed: int
    artifacts: List[str] = []
    timings: Dict[str, float] = {}
    digest: str = ""

    def compute_digest(self) -> str:
        payload = {
            "subcommand": self.subcommand,
            "parameters": self.parameters,
            "input_digests": self.input_digests,
            "seed": self.seed,
        }
        return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()

    def seal(self) -> "RunManifest":
        self.digest = self.compute_digest()
        return self


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, indent=2)


def write_json(path: Union[str, Path], payload: Any):
    Path(path).write_text(canonical_json(payload) + "\n", encoding="utf-8")


def file_digest(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def sibling(out: Union[str, Path], suffix: str) -> Path:
    """rf.model.json + '.train.csv' -> rf.model.train.csv"""
    out = Path(out)
    stem = out.name[:-len(".json")] if out.name.endswith(".json") else out.name
    return out.with_name(stem + suffix)


def build_manifest(subcommand: str, args, inputs: Dict[str, str]) -> RunManifest:
    """
    Parameters are the parsed arguments minus output locations, worker
    counts and logging switches; input files enter by content digest.
    """
    parameters = {
        key: value for key, value in sorted(vars(args).items())
        if key not in NON_REPRODUCIBLE and key not in inputs
    }
    manifest = RunManifest(
        subcommand=subcommand,
        parameters=parameters,
        # missing inputs are reported by their loaders with the proper exit code
        input_digests={name: file_digest(path) if Path(path).is_file() else "missing"
                       for name, path in sorted(inputs.items())},
        seed=int(getattr(args, "seed", 0) or 0),
    )
    return manifest.seal()


def write_manifest(out: Union[str, Path], manifest: RunManifest) -> Path:
    path = Path(str(out) + ".manifest.json")
    write_json(path, manifest.model_dump())
    logger.info(f"manifest_written - path={path}, digest={manifest.digest[:16]}")
    return path
