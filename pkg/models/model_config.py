"""Run-config model block: `{"family", "structure", "params", "bounds"?, "fixed"?}` in JSON or YAML."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import structlog
import yaml
from pydantic import BaseModel, Field, ValidationError as PydanticValidationError

from pipeline.schemas import DependenceSpec
from utils.errors import ValidationError

logger = structlog.get_logger(__name__)


class ModelConfig(BaseModel):
    family: str
    structure: str
    params: Dict[str, float]
    bounds: Optional[Dict[str, Tuple[float, float]]] = None
    fixed: List[str] = Field(default_factory=list)

    def to_spec(self) -> DependenceSpec:
        return DependenceSpec(self.family, self.structure, self.params, self.bounds, frozenset(self.fixed))


def parse_model_config(data: Dict) -> DependenceSpec:
    try:
        return ModelConfig.model_validate(data).to_spec()
    except PydanticValidationError as e:
        raise ValidationError(f"invalid model config: {e}") from e


def load_model_config(path: Path | str) -> DependenceSpec:
    """Load a model block; a top-level `model` key is unwrapped when present."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"model config not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text) if path.suffix.lower() in (".yaml", ".yml") else json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ValidationError(f"{path.name}: {e}") from e
    if isinstance(data, dict) and "model" in data:
        data = data["model"]
    if not isinstance(data, dict):
        raise ValidationError(f"{path.name}: model config must be a mapping")
    spec = parse_model_config(data)
    logger.info("model_config_loaded", path=str(path), model=spec.label, fixed=sorted(spec.fixed))
    return spec


def load_model_configs(path: Path | str) -> List[DependenceSpec]:
    """Several model blocks under a `models` list (used by `compare`), or a single block."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"model config not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text) if path.suffix.lower() in (".yaml", ".yml") else json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ValidationError(f"{path.name}: {e}") from e
    if isinstance(data, dict) and "models" in data:
        return [parse_model_config(block) for block in data["models"]]
    return [load_model_config(path)]
