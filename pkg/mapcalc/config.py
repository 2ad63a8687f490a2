import logging
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

BASE_DIR = Path(__file__).resolve().parent.parent
DEFAULTS_PATH = BASE_DIR / "data" / "defaults.toml"


class Settings(BaseSettings):
    """Process settings; the output directory is the only environment-driven value."""

    output_dir: Path = Field(
        default=Path("reports"),
        description="Directory receiving JSON reports, CSV tables and checkpoints",
        validation_alias="MAPCALC_OUTPUT_DIR",
    )

    model_config = SettingsConfigDict(case_sensitive=False, extra="ignore")


# Global settings instance
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Get or create the global settings instance."""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class NumericsDefaults(_Strict):
    fd_step: float = Field(default=1e-4, gt=0)
    stencil_order: Literal[2, 4] = 2
    degenerate_eps: float = Field(default=1e-9, gt=0)
    richardson_t0: float = Field(default=1e-4, gt=0)
    quadrature: Literal["trapezoid", "midpoint"] = "trapezoid"


class ToleranceDefaults(_Strict):
    """Every pass/fail threshold used by the checks; echoed into each report."""

    soliton_residual: float = 1e-8
    scal_origin: float = 1e-6
    hamilton_defect: float = 1e-6
    two_d_identity: float = 1e-8
    flat_scalar: float = 1e-10
    oracle_rel: float = 0.01
    oracle_h2_factor: float = 10.0
    delta_tau_rel: float = 0.02
    trace_rel: float = 1e-12
    ladder_factor: float = 3.5
    ibp_rel: float = 0.05
    ledger_rel: float = 0.05
    div_rel: float = 0.05
    gradient_check_rel: float = 0.01
    decay_exponent: float = 1.0
    decay_exponent_laplacian: float = 2.0
    shi_growth_factor: float = 2.0
    cutoff_constant: float = 15.0

    def oracle(self, h: float) -> float:
        """Relative tolerance max(oracle_rel, oracle_h2_factor * h^2)."""
        return max(self.oracle_rel, self.oracle_h2_factor * h * h)


class LoggingDefaults(_Strict):
    level: str = "INFO"
    format: Literal["json", "text"] = "text"

    @field_validator("level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        valid_levels = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}
        v_upper = v.upper()
        if v_upper not in valid_levels:
            raise ValueError(f"log level must be one of {valid_levels}")
        return v_upper


class Defaults(_Strict):
    numerics: NumericsDefaults = NumericsDefaults()
    tolerances: ToleranceDefaults = ToleranceDefaults()
    logging: LoggingDefaults = LoggingDefaults()


def _read_toml(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as e:
        raise ConfigurationError(f"Config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"Invalid TOML in {path}: {e}") from e


@lru_cache(maxsize=4)
def load_defaults(path: Optional[Path] = None) -> Defaults:
    """Load the shipped defaults file (data/defaults.toml)."""
    path = Path(path) if path is not None else DEFAULTS_PATH
    if not path.exists():
        logger.warning("Defaults file missing, using built-in values", extra={"path": str(path)})
        return Defaults()
    try:
        return Defaults.model_validate(_read_toml(path))
    except ValidationError as e:
        raise ConfigurationError(f"Invalid defaults file {path}: {e}") from e


def parse_spacing(value: Union[str, float, int]) -> float:
    """Accept grid spacings written as floats or fractions such as '1/64'."""
    if isinstance(value, str):
        try:
            spacing = float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError) as e:
            raise ValueError(f"cannot parse grid spacing {value!r}") from e
    else:
        spacing = float(value)
    if spacing <= 0:
        raise ValueError("grid spacing must be positive")
    return spacing


ManifoldPreset = Literal["euclidean", "cigar", "sphere", "hyperbolic", "gaussian", "euclidean-trivial"]


class ManifoldSection(_Strict):
    preset: ManifoldPreset = "euclidean"
    dim: int = Field(default=2, ge=1, le=4)
    half_width: float = Field(default=1.0, gt=0)
    radius: float = Field(default=1.0, gt=0)
    h: float = 1.0 / 32.0
    analytic: bool = True
    fd_step: Optional[float] = Field(default=None, gt=0)
    stencil_order: Optional[Literal[2, 4]] = None
    quadrature: Optional[Literal["trapezoid", "midpoint"]] = None

    @field_validator("h", mode="before")
    @classmethod
    def validate_h(cls, v: Any) -> float:
        return parse_spacing(v)


class TargetSection(_Strict):
    preset: Literal["euclidean", "sphere", "hyperbolic"] = "euclidean"
    dim: int = Field(default=2, ge=1, le=4)
    radius: float = Field(default=1.0, gt=0)


MapPreset = Literal[
    "constant", "identity", "linear", "bump", "sphere-bump", "random-smooth", "gaussian-tail"
]


class MapSection(_Strict):
    preset: MapPreset = "random-smooth"
    base: Literal["constant", "identity"] = "constant"
    seed: int = 7
    amplitude: float = 0.2
    support_radius: float = Field(default=0.7, gt=0)
    center: Optional[List[float]] = None
    linear: Optional[List[List[float]]] = None
    modes: int = Field(default=2, ge=1)
    tail_width: float = Field(default=0.8, gt=0)


class ParamsSection(_Strict):
    p: float = Field(default=2.0, ge=2.0)
    q: float = Field(default=2.0, ge=2.0)
    lagrangian: Literal["dirichlet", "p-energy", "potential"] = "dirichlet"
    b_lagrangian: Literal["bienergy", "dirichlet", "f-energy"] = "bienergy"
    stress: Literal["S_2p", "S_2pq", "S_2L", "S_BL", "all"] = "all"
    variant: Literal["derived", "printed"] = "derived"
    lam: float = 1.0
    x0: Optional[List[float]] = None
    R: float = Field(default=1.0, gt=0)
    R_ladder: List[float] = Field(default_factory=lambda: [1.0, 2.0, 4.0])
    metric_balls: bool = False
    c_target: Optional[float] = None
    n_tensors: int = Field(default=20, ge=1)
    refine: bool = True


class FlowSection(_Strict):
    alpha0: float = Field(default=1e-2, gt=0)
    policy: Literal["fixed", "backtracking"] = "backtracking"
    beta: float = Field(default=0.5, gt=0, lt=1)
    armijo_c: float = Field(default=1e-4, gt=0, lt=1)
    max_iterations: int = Field(default=500, ge=0)
    tau_tolerance: float = Field(default=1e-3, gt=0)
    energy_tolerance: float = Field(default=1e-14, gt=0)
    gradient_mode: Literal["assembled", "finite_difference"] = "assembled"
    gradient_check: bool = True
    require_convergence: bool = True
    force: bool = False
    checkpoint: Optional[str] = None
    checkpoint_every: int = Field(default=50, ge=1)
    resume: bool = False
    log_every: int = Field(default=50, ge=1)


class OutputSection(_Strict):
    directory: Optional[str] = None
    csv: bool = True


class ExperimentConfig(_Strict):
    """One experiment; unknown keys anywhere are rejected."""

    command: Optional[str] = None
    manifold: ManifoldSection = ManifoldSection()
    target: TargetSection = TargetSection()
    map: MapSection = MapSection()
    params: ParamsSection = ParamsSection()
    flow: FlowSection = FlowSection()
    tolerances: Dict[str, float] = Field(default_factory=dict)
    output: OutputSection = OutputSection()

    @field_validator("tolerances")
    @classmethod
    def validate_tolerance_keys(cls, v: Dict[str, float]) -> Dict[str, float]:
        unknown = set(v) - set(ToleranceDefaults.model_fields)
        if unknown:
            raise ValueError(f"unknown tolerance keys: {sorted(unknown)}")
        return v

    @model_validator(mode="after")
    def validate_sphere_dim(self) -> "ExperimentConfig":
        if self.manifold.preset == "sphere" and self.manifold.dim != 2:
            raise ValueError("sphere preset is two-dimensional")
        if self.target.preset == "sphere" and self.target.dim != 2:
            raise ValueError("sphere target is two-dimensional")
        return self

    def resolved_tolerances(self, defaults: Defaults) -> ToleranceDefaults:
        """Shipped tolerances with this experiment's overrides applied."""
        return defaults.tolerances.model_copy(update=self.tolerances)


def load_experiment(path: Union[str, Path]) -> ExperimentConfig:
    """Read and validate an experiment TOML file."""
    raw = _read_toml(Path(path))
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid experiment config {path}: {e}") from e


def apply_overrides(config: ExperimentConfig, overrides: Dict[str, Any]) -> ExperimentConfig:
    """
    Apply dotted-key overrides such as {"params.p": 4} and revalidate.

    None values are ignored so unset CLI flags never clobber file values.
    """
    data = config.model_dump()
    for dotted, value in overrides.items():
        if value is None:
            continue
        section, _, key = dotted.partition(".")
        if not key:
            data[section] = value
            continue
        data.setdefault(section, {})[key] = value
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration override: {e}") from e
