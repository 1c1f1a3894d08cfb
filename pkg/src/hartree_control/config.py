"""Run configuration: YAML file validated by a strict schema."""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, field_validator

SUBCOMMANDS = ("basis", "evolve", "control", "control-nonlinear", "noncontrol-scan", "scaling-scan", "verify")


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridConfig(Strict):
    X: PositiveFloat = 30.0
    n_points: PositiveInt = 3001

    @field_validator("n_points")
    @classmethod
    def _odd(cls, v):
        if v % 2 == 0 or v < 31:
            raise ValueError("n_points must be odd and at least 31")
        return v


class TimeConfig(Strict):
    T: PositiveFloat = 1.0
    dt: PositiveFloat = 5e-4


class PotentialConfig(Strict):
    kind: Literal["weight_mu", "linear_field", "abs_value"] = "weight_mu"
    slope: float = 1.0


class CutoffConfig(Strict):
    kind: Literal["exterior", "interior", "unit"] = "exterior"
    radius: PositiveFloat = 2.0


class KernelConfig(Strict):
    kind: Literal["poisson_split", "zero"] = "poisson_split"


class SolverConfig(Strict):
    n_modes: PositiveInt = 256
    cg_tol: PositiveFloat = 1e-10
    cg_max_iter: PositiveInt = 2000
    fp_tol: PositiveFloat = 1e-10
    fp_max_iter: PositiveInt = 30
    n_probe: Optional[PositiveInt] = None
    path: Literal["auto", "modal", "grid"] = "auto"


class DataConfig(Strict):
    kind: Literal["zero", "gaussian", "eigenmode", "drift"] = "gaussian"
    center: float = 0.0
    width: PositiveFloat = 1.0
    momentum: float = 0.0
    index: int = Field(0, ge=0)
    norm: Optional[PositiveFloat] = None  # rescale to this truncated W^1 norm


class EvolveConfig(Strict):
    scheme: Literal["crank_nicolson", "split_step", "avron_herbst"] = "crank_nicolson"


class BasisConfig(Strict):
    n: PositiveInt = 20


class NoncontrolConfig(Strict):
    N_list: list[int] = [2, 3, 4, 5, 6, 7, 8]
    kinds: list[Literal["interior", "exterior"]] = ["interior", "exterior"]
    n_modes: PositiveInt = 128
    cg_max_iter: PositiveInt = 300
    n_probe: PositiveInt = 64


class ScalingConfig(Strict):
    eps: list[PositiveFloat] = [0.1, 0.05, 0.025]
    dx_factor: PositiveFloat = 20.0
    box_factor: PositiveFloat = 40.0
    edge_tol: PositiveFloat = 1e-3


class OutputConfig(Strict):
    time_stride: PositiveInt = 40
    space_stride: PositiveInt = 5


class VerifyConfig(Strict):
    n_samples: PositiveInt = 20
    X: PositiveFloat = 15.0
    dx: PositiveFloat = 0.05
    dt: PositiveFloat = 1e-3
    n_modes: PositiveInt = 64


class RunConfig(Strict):
    subcommand: Literal[SUBCOMMANDS] = "verify"  # type: ignore[valid-type]
    grid: GridConfig = GridConfig()
    time: TimeConfig = TimeConfig()
    potential: PotentialConfig = PotentialConfig()
    cutoff: CutoffConfig = CutoffConfig()
    kernel: KernelConfig = KernelConfig()
    solver: SolverConfig = SolverConfig()
    u0: DataConfig = DataConfig(center=1.0)
    uT: DataConfig = DataConfig(kind="eigenmode", index=0, norm=None)
    basis: BasisConfig = BasisConfig()
    evolve: EvolveConfig = EvolveConfig()
    noncontrol: NoncontrolConfig = NoncontrolConfig()
    scaling: ScalingConfig = ScalingConfig()
    output: OutputConfig = OutputConfig()
    verify: VerifyConfig = VerifyConfig()
    seed: int = Field(0, ge=0, lt=2**64)
    threads: PositiveInt = 1


class ConfigError(ValueError):
    pass


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    raw = {}
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return RunConfig.model_validate(raw)
    except Exception as err:  # pydantic.ValidationError
        raise ConfigError(str(err)) from err
