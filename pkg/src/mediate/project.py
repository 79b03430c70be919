"""Project file: paths to the collaboration's inputs plus tunable config.

Ontology, transformation rules, deduction rules and CEP rules default to the
packaged seed data when the project does not override them. MEDIATE_DATA_DIR
redirects artifacts/patterns (the only env var besides MEDIATE_BIND).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .errors import ProjectError
from .matching import MatchConfig

SCHEMA_VERSION = 1


def packaged_data(name: str) -> Path:
    ref = resources.files("mediate.data").joinpath(name)
    with resources.as_file(ref) as p:
        return Path(p)


@dataclass
class ProjectConfig:
    alpha: float = 0.7
    auto_threshold: float = 0.9
    validation_floor: float = 0.4
    composition_k: int = 3
    pattern_threshold: float = 1.0
    cover_threshold: float = 1.0
    near_by_threshold: float = 0.5
    chain_bound: int = 3
    pair_threshold: float = 0.5
    distance_weights: dict[str, float] = field(
        default_factory=lambda: {"situation": 0.4, "network": 0.3, "execution": 0.3})
    distance_threshold: float = 0.2
    seed: int = 0
    auto_confirm_links: bool = False
    waived_objectives: tuple[str, ...] = ()
    auto_dispatch: bool = False

    def check(self) -> None:
        for name in ("alpha", "auto_threshold", "validation_floor", "pattern_threshold",
                     "cover_threshold", "near_by_threshold", "pair_threshold",
                     "distance_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.5:
                raise ProjectError(f"config {name} out of range: {value}")
        if self.composition_k < 1 or self.chain_bound < 1:
            raise ProjectError("composition_k and chain_bound must be >= 1")
        total = sum(self.distance_weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ProjectError(f"distance_weights must sum to 1, got {total}")

    def match_config(self) -> MatchConfig:
        return MatchConfig(
            alpha=self.alpha,
            auto_threshold=self.auto_threshold,
            validation_floor=self.validation_floor,
            composition_k=self.composition_k,
            pattern_threshold=self.pattern_threshold,
            cover_threshold=self.cover_threshold,
        )


@dataclass
class Project:
    root: Path
    model_path: Path
    ontology_path: Path
    registry_path: Path
    transform_rules_path: Path
    deduction_rules_path: Path
    cep_rules_path: Path
    patterns_dir: Path
    artifacts_dir: Path
    config: ProjectConfig

    @classmethod
    def load(cls, path: str | Path) -> "Project":
        path = Path(path)
        if not path.exists():
            raise ProjectError(f"project file not found: {path}")
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
        if not isinstance(raw, dict) or raw.get("schema_version") != SCHEMA_VERSION:
            raise ProjectError(f"unsupported project schema in {path}")
        root = path.parent

        def resolve(key: str, default: Path | None = None) -> Path:
            value = raw.get(key)
            if value is None:
                if default is None:
                    raise ProjectError(f"project is missing required path {key!r}")
                return default
            return (root / str(value)).resolve()

        cfg_raw = dict(raw.get("config", {}))
        known = {f for f in ProjectConfig.__dataclass_fields__}
        unknown = set(cfg_raw) - known
        if unknown:
            raise ProjectError(f"unknown config keys: {sorted(unknown)}")
        if "waived_objectives" in cfg_raw:
            cfg_raw["waived_objectives"] = tuple(cfg_raw["waived_objectives"])
        config = ProjectConfig(**cfg_raw)
        config.check()
        data_dir = os.environ.get("MEDIATE_DATA_DIR")
        data_root = Path(data_dir).resolve() if data_dir else None
        project = cls(
            root=root,
            model_path=resolve("model"),
            ontology_path=resolve("ontology", packaged_data("ontology.yaml")),
            registry_path=resolve("registry"),
            transform_rules_path=resolve("transformation_rules", packaged_data("transforms.yaml")),
            deduction_rules_path=resolve("deduction_rules", packaged_data("deduction-rules.yaml")),
            cep_rules_path=resolve("cep_rules", packaged_data("cep-rules.yaml")),
            patterns_dir=(data_root / "patterns") if data_root
            else resolve("patterns_dir", (root / "patterns").resolve()),
            artifacts_dir=(data_root / "build") if data_root
            else resolve("artifacts_dir", (root / "build").resolve()),
            config=config,
        )
        return project

    def check_files(self, *paths: Path) -> None:
        for p in paths:
            if not p.exists():
                raise ProjectError(f"required file not found: {p}")

    def artifact(self, name: str) -> Path:
        return self.artifacts_dir / name
