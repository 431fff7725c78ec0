# Output File Store
# Atomic file writes plus the per-method model directory

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..errors import InputError, ModelFormatError
from ..markov import model_from_json, model_to_json
from ..models import MarkovChain, Program

logger = logging.getLogger(__name__)

MODELS_DIRNAME = "models"
MANIFEST_NAME = "manifest.json"

PathLike = Union[str, Path]


def atomic_write_text(path: PathLike, text: str) -> Path:
    """Write through a temporary sibling file and rename it into place"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, temp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=str(target.parent))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(temp_name, target)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise
    return target


def read_text(path: PathLike, what: str = "file") -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {what} '{path}': {exc.strerror or exc}") from exc


def model_filename(method_id: str) -> str:
    # method ids may carry a corpus prefix such as p003:Main.main
    return method_id.replace(":", "_").replace("/", "_") + ".json"


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

class ManifestEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")
    method: str
    file: str
    num_accesses: int = Field(ge=0)
    states: int = Field(ge=1)
    method_size: int = Field(ge=0)
    retained_empty_states: List[int] = Field(default_factory=list)


class Manifest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: Dict[str, object] = Field(default_factory=dict)
    classes: Dict[str, List[str]] = Field(default_factory=dict)
    methods: List[ManifestEntry] = Field(default_factory=list)


class ModelStore:
    """Directory layout `<root>/models/<method-id>.json` plus `<root>/manifest.json`"""

    def __init__(self, root: PathLike):
        self.root = Path(root)
        self.models_dir = self.root / MODELS_DIRNAME

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST_NAME

    def save(self, chains: List[MarkovChain], method_sizes: Dict[str, int],
             classes: Dict[str, List[str]], config: Optional[Dict[str, object]] = None
             ) -> Manifest:
        entries = []
        for chain in sorted(chains, key=lambda c: c.method):
            name = model_filename(chain.method)
            atomic_write_text(self.models_dir / name, model_to_json(chain))
            entries.append(ManifestEntry(
                method=chain.method,
                file=f"{MODELS_DIRNAME}/{name}",
                num_accesses=chain.num_accesses,
                states=len(chain.states),
                method_size=method_sizes.get(chain.method, 0),
                retained_empty_states=chain.retained_empty_states(),
            ))
        manifest = Manifest(config=config or {}, classes=classes, methods=entries)
        atomic_write_text(self.manifest_path,
                          json.dumps(manifest.model_dump(), indent=2, sort_keys=True) + "\n")
        logger.info("Wrote %d model file(s) to %s", len(entries), self.models_dir)
        return manifest

    def load_manifest(self) -> Manifest:
        text = read_text(self.manifest_path, "manifest")
        try:
            return Manifest.model_validate(json.loads(text))
        except (json.JSONDecodeError, ValidationError) as exc:
            raise ModelFormatError(f"malformed manifest {self.manifest_path}: {exc}") from exc

    def load_models(self) -> Dict[str, MarkovChain]:
        """Every model listed in the manifest, keyed by method id"""
        chains: Dict[str, MarkovChain] = {}
        for entry in self.load_manifest().methods:
            chain = model_from_json(read_text(self.root / entry.file, "model"))
            if chain.method != entry.method:
                raise ModelFormatError(
                    f"{entry.file} holds a model of {chain.method}, expected {entry.method}")
            chains[chain.method] = chain
        return chains


def class_table(program: Program, prefix: str = "") -> Dict[str, List[str]]:
    return {prefix + c.name: list(c.field_names) for c in program.classes}
