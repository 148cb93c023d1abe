"""Staged optimization schedules: which parameters move in each stage and where the first stage starts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

from pipeline.schemas import DependenceSpec, Structure
from utils.errors import ValidationError


@dataclass(frozen=True)
class Stage:
    """`free=None` frees every non-fixed parameter; `init_from` seeds the stage from a nested model's optimum."""

    label: str
    free: Optional[Tuple[str, ...]] = None
    init_from: Optional[Structure] = None

    def free_names(self, spec: DependenceSpec) -> Tuple[str, ...]:
        names = spec.free_names if self.free is None else tuple(self.free)
        return tuple(n for n in names if n not in spec.fixed)


@dataclass(frozen=True)
class StagePlan:
    stages: Tuple[Stage, ...]

    @classmethod
    def single(cls, label: str = "all") -> "StagePlan":
        return cls((Stage(label),))

    def validate(self, spec: DependenceSpec) -> None:
        if not self.stages:
            raise ValidationError("a stage plan needs at least one stage")
        for stage in self.stages:
            unknown = [n for n in (stage.free or ()) if n not in spec.params]
            if unknown:
                raise ValidationError(f"stage '{stage.label}' frees unknown parameters {unknown}")
        if any(s.init_from is not None for s in self.stages[1:]):
            raise ValidationError("only the first stage may start from a nested model")
        covered = set()
        for stage in self.stages:
            covered.update(stage.free_names(spec))
        if covered != set(spec.free_names):
            raise ValidationError(f"stages leave {sorted(set(spec.free_names) - covered)} unfitted")
        if set(self.stages[-1].free_names(spec)) != set(spec.free_names):
            raise ValidationError("the final stage must free every parameter")

    @property
    def nested_structure(self) -> Optional[Structure]:
        return self.stages[0].init_from


def _without(spec: DependenceSpec, names: Sequence[str]) -> Tuple[str, ...]:
    return tuple(n for n in spec.free_names if n not in names)


def default_plan(spec: DependenceSpec) -> StagePlan:
    """Start every structure from the optimum of the model it extends; M1 moves the altitude scale on its own first."""
    structure = spec.structure
    if structure is Structure.ISO:
        return StagePlan.single()
    if structure is Structure.M1:
        return StagePlan((
            Stage("spatial", _without(spec, ("q3",)), init_from=Structure.ANISO),
            Stage("covariate", ("q3",)),
            Stage("all"),
        ))
    parent = {
        Structure.ANISO: Structure.ISO,
        Structure.M2: Structure.M1,
        Structure.M3: Structure.M2,
        Structure.MBD: Structure.ANISO,
        Structure.MHG: Structure.ANISO,
    }[structure]
    return StagePlan((Stage(f"from-{parent.value}", init_from=parent),))
