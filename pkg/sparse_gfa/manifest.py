"""Run manifest: everything needed to regenerate a model directory."""

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from . import __version__
from .components import ViewRoleMap
from .exceptions import IntegrityError, InvalidInputError, ParseError
from .gibbs import SamplingSchedule
from .model import ModelConfig

PREPROCESSING_ORDER = ["merge_replicates", "threshold_top_genes", "assemble_dataset"]


def safe_name(name: str) -> str:
    """Filesystem-safe version of a view name."""
    return re.sub(r"[^\w\-.]", "_", str(name))


def file_sha256(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class ViewSpec:
    """One input view file and its declared role."""

    path: str
    role: str
    name: Optional[str] = None

    @property
    def view_name(self) -> str:
        return self.name or Path(self.path).stem


@dataclass
class RunManifest:
    """Inputs, model, schedule and preprocessing flags of one fit."""

    views: List[ViewSpec]
    model: ModelConfig = field(default_factory=ModelConfig)
    schedule: SamplingSchedule = field(default_factory=SamplingSchedule)
    preprocessing: Dict[str, Any] = field(
        default_factory=lambda: {
            "merge_replicates": True,
            "threshold": False,
            "n_up": 2000,
            "n_down": 2000,
        }
    )
    output_dir: str = "model"
    tool_version: str = __version__
    input_hashes: Dict[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        if len(self.views) < 2:
            raise InvalidInputError("a manifest needs at least 2 views")
        names = [v.view_name for v in self.views]
        if len(set(names)) != len(names):
            raise InvalidInputError(f"view names are not unique: {names}")
        files = [safe_name(n) for n in names]
        if len(set(files)) != len(files):
            raise InvalidInputError(
                f"view names map to the same file name: {names} -> {files}"
            )
        self.model.validate()
        self.schedule.validate()

    def roles(self) -> ViewRoleMap:
        return ViewRoleMap({v.view_name: v.role for v in self.views})

    def resolve(self, view: ViewSpec, base_dir: Path) -> Path:
        path = Path(view.path)
        return path if path.is_absolute() else base_dir / path

    def compute_hashes(self, base_dir: Path) -> None:
        """Record the content hash of every input view."""
        hashes = {}
        for view in self.views:
            path = self.resolve(view, base_dir)
            if not path.exists():
                raise InvalidInputError(f"view file not found: {path}")
            hashes[view.path] = file_sha256(path)
        self.input_hashes = hashes

    def verify_hashes(self, base_dir: Path) -> None:
        """Check the recorded hashes against the files on disk."""
        for view in self.views:
            path = self.resolve(view, base_dir)
            if not path.exists():
                raise InvalidInputError(f"view file not found: {path}")
            expected = self.input_hashes.get(view.path)
            if expected is None:
                raise IntegrityError(f"manifest has no hash for {view.path}")
            actual = file_sha256(path)
            if actual != expected:
                raise IntegrityError(
                    f"content hash mismatch for {path}: manifest {expected[:12]}..., "
                    f"file {actual[:12]}..."
                )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "views": [
                {"path": v.path, "role": v.role, **({"name": v.name} if v.name else {})}
                for v in self.views
            ],
            "model": self.model.to_dict(),
            "schedule": self.schedule.to_dict(),
            "preprocessing": {
                **self.preprocessing,
                "order": PREPROCESSING_ORDER,
            },
            "output_dir": self.output_dir,
            "tool_version": self.tool_version,
            "input_hashes": dict(self.input_hashes),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunManifest":
        try:
            views = [ViewSpec(**v) for v in data["views"]]
            preprocessing = dict(data.get("preprocessing", {}))
            preprocessing.pop("order", None)
            manifest = cls(
                views=views,
                model=ModelConfig.from_dict(data.get("model", {})),
                schedule=SamplingSchedule(**data.get("schedule", {})),
                output_dir=data.get("output_dir", "model"),
                tool_version=data.get("tool_version", __version__),
                input_hashes=dict(data.get("input_hashes", {})),
            )
        except (KeyError, TypeError) as e:
            raise InvalidInputError(f"malformed manifest: {e}")
        manifest.preprocessing.update(preprocessing)
        return manifest

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunManifest":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except OSError as e:
            raise ParseError(f"cannot read manifest: {e}", str(path))
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON: {e.msg}", str(path), e.lineno)
        if not isinstance(data, dict):
            raise ParseError("manifest must be a JSON object", str(path), 1)
        return cls.from_dict(data)
