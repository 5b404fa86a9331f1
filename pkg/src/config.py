from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Annotated, Literal, Optional, Union
import json
import os

import numpy as np
import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, ValidationError

from src.errors import ConfigError, SpectraError
from src.model_core import (
    CrossedTwoWay,
    DesignSpec,
    Explicit,
    NestedBalanced,
    OneWay,
    SampleCovariance,
    SolverConfig,
    VarianceComponents,
    validate_components,
)

PROJECT_ROOT = Path(__file__).resolve().parents[1]
DEFAULT_APP_CONFIG = PROJECT_ROOT / "config" / "app.yaml"


@dataclass(frozen=True)
class AppConfig:
    raw: dict

    @property
    def seed(self) -> int:
        return int(self.raw["app"]["seed"])

    @property
    def outputs_dir(self) -> Path:
        return Path(self.raw["paths"]["outputs_dir"])

    @property
    def logs_dir(self) -> Path:
        return Path(self.raw["paths"]["logs_dir"])

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(**self.raw.get("solver", {}))

    @property
    def epsilon(self) -> float:
        return float(self.raw["density"]["epsilon"])

    @property
    def grid_count(self) -> int:
        return int(self.raw["density"]["grid_count"])

    @property
    def support_threshold(self) -> float:
        return float(self.raw["density"]["support_threshold"])

    @property
    def support_pad(self) -> float:
        return float(self.raw["density"]["support_pad"])

    @property
    def ks_threshold(self) -> float:
        return float(self.raw["validation"]["ks_threshold"])

    @property
    def moment_orders(self) -> int:
        return int(self.raw["validation"]["moment_orders"])

    @property
    def mass_warning(self) -> float:
        return float(self.raw["validation"]["mass_warning"])

    @property
    def threads(self) -> int:
        value = os.getenv("SPECTRA_THREADS", self.raw.get("parallel", {}).get("threads", 1))
        try:
            threads = int(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"SPECTRA_THREADS must be an integer, got {value!r}") from exc
        if threads < 0:
            raise ConfigError(f"thread count must be >= 0, got {threads}")
        return threads or (os.cpu_count() or 1)


def load_config(path: str | Path = DEFAULT_APP_CONFIG) -> AppConfig:
    load_dotenv()
    path = Path(path)
    if not path.exists() and not path.is_absolute() and (PROJECT_ROOT / path).exists():
        path = PROJECT_ROOT / path
    if not path.exists():
        raise ConfigError(f"app config not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        raw = yaml.safe_load(f)
    # Fail early on missing sections rather than at first property access
    missing = [key for key in ("app", "paths", "density", "validation") if key not in (raw or {})]
    if missing:
        raise ConfigError(f"{path}: missing sections {missing}")
    try:
        SolverConfig(**raw.get("solver", {}))
    except TypeError as exc:
        raise ConfigError(f"{path}: bad solver section: {exc}") from exc
    return AppConfig(raw=raw)


# --- per-run JSON documents -----------------------------------------------------------

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class OneWayDesign(_Strict):
    kind: Literal["one_way"]
    group_sizes: list[PositiveInt]


class NestedDesign(_Strict):
    kind: Literal["nested"]
    levels: list[PositiveInt]


class CrossedDesign(_Strict):
    kind: Literal["crossed"]
    I: PositiveInt  # noqa: E741
    J: PositiveInt
    K: PositiveInt
    L: PositiveInt


class ExplicitDesign(_Strict):
    kind: Literal["explicit"]
    B: list[list[float]]
    U: list[list[list[float]]]


class SampleCovarianceDesign(_Strict):
    kind: Literal["sample_covariance"]
    n: PositiveInt


DesignDoc = Annotated[
    Union[OneWayDesign, NestedDesign, CrossedDesign, ExplicitDesign, SampleCovarianceDesign],
    Field(discriminator="kind"),
]


class DiagSigma(_Strict):
    diag: list[float]


class IdentitySigma(_Strict):
    identity: PositiveInt


class ZeroSigma(_Strict):
    zero: PositiveInt


class LinspaceSigma(_Strict):
    linspace: tuple[float, float, PositiveInt]


SigmaDoc = Union[list[list[float]], DiagSigma, IdentitySigma, ZeroSigma, LinspaceSigma]


class SolverOverrides(_Strict):
    tol: Optional[float] = Field(default=None, gt=0)
    max_iters: Optional[PositiveInt] = None
    damping: Optional[float] = Field(default=None, gt=0, le=1)
    auto_damp: Optional[bool] = None
    newton: Optional[bool] = None
    strategy: Optional[Literal["auto", "general", "closed_form"]] = None


class RunConfig(_Strict):
    design: DesignDoc
    sigmas: list[SigmaDoc] = Field(min_length=1)
    target: PositiveInt = 1
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64)
    solver: Optional[SolverOverrides] = None


def sigma_matrix(doc: SigmaDoc) -> np.ndarray:
    if isinstance(doc, DiagSigma):
        return np.diag(np.asarray(doc.diag, dtype=float))
    if isinstance(doc, IdentitySigma):
        return np.eye(doc.identity)
    if isinstance(doc, ZeroSigma):
        return np.zeros((doc.zero, doc.zero))
    if isinstance(doc, LinspaceSigma):
        lo, hi, p = doc.linspace
        return np.diag(np.linspace(lo, hi, p))
    return np.asarray(doc, dtype=float)


def design_from_doc(doc: DesignDoc) -> DesignSpec:
    if isinstance(doc, OneWayDesign):
        return OneWay(tuple(doc.group_sizes))
    if isinstance(doc, NestedDesign):
        return NestedBalanced(tuple(doc.levels))
    if isinstance(doc, CrossedDesign):
        return CrossedTwoWay(doc.I, doc.J, doc.K, doc.L)
    if isinstance(doc, ExplicitDesign):
        return Explicit(np.asarray(doc.B, dtype=float), tuple(np.asarray(u, dtype=float) for u in doc.U))
    return SampleCovariance(doc.n)


@dataclass(frozen=True, eq=False)
class RunSetup:
    path: Path
    design: DesignSpec
    components: VarianceComponents
    target: int
    seed: Optional[int]
    overrides: dict

    def solver_config(self, base: SolverConfig) -> SolverConfig:
        return replace(base, **self.overrides)


def load_run_config(path: str | Path) -> RunSetup:
    """Parse and validate a run document; every failure surfaces as ConfigError naming the path."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"run config not found: {path}")
    try:
        doc = RunConfig.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    try:
        design = design_from_doc(doc.design)
        components = validate_components([sigma_matrix(s) for s in doc.sigmas])
    except SpectraError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if components.k != design.k:
        raise ConfigError(f"{path}: design has {design.k} effects but {components.k} sigmas were given")
    if doc.target > design.k:
        raise ConfigError(f"{path}: target {doc.target} outside 1..{design.k}")

    overrides = doc.solver.model_dump(exclude_none=True) if doc.solver else {}
    return RunSetup(path=path, design=design, components=components, target=doc.target, seed=doc.seed, overrides=overrides)
