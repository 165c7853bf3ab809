import hashlib
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from trendbands.config import settings
from trendbands.estimator import Estimator
from trendbands.exceptions import InvalidConfigError

MAX_SEED = 2**64 - 1


class BootstrapMethod(str, Enum):
    AWB = "awb"  # autoregressive wild bootstrap
    DWB = "dwb"  # dependent wild bootstrap
    WB = "wb"  # plain wild bootstrap


class BootstrapConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    method: BootstrapMethod = BootstrapMethod.AWB
    gamma: Optional[float] = Field(None, ge=0.0, lt=1.0)
    theta: Optional[float] = Field(None, gt=0.0, lt=1.0)
    ell: Optional[float] = Field(None, gt=0.0)
    B: int = Field(999, ge=2)
    h: float = Field(..., gt=0.0, lt=1.0)
    h_tilde: Optional[float] = Field(None, gt=0.0, lt=1.0)
    seed: int = Field(0, ge=0, le=MAX_SEED)
    estimator: Estimator = Estimator.LOCAL_CONSTANT

    @model_validator(mode="after")
    def check_tuning(self) -> "BootstrapConfig":
        from trendbands.bootstrap import DEFAULT_THETA, default_h_tilde, ell_from_gamma

        if self.h_tilde is None:
            self.h_tilde = default_h_tilde(self.h)
            if self.h_tilde >= 1.0:
                raise InvalidConfigError(f"default h_tilde 2h^(5/9) = {self.h_tilde:.4g} leaves (0, 1)")
        if not self.h < self.h_tilde:
            raise InvalidConfigError(f"oversmoothing needs h < h_tilde, got {self.h} >= {self.h_tilde}")

        by_gamma = self.gamma is not None
        by_block = self.theta is not None or self.ell is not None
        if self.method is BootstrapMethod.AWB:
            if by_gamma == by_block:
                raise InvalidConfigError("AWB takes exactly one of gamma or (theta, ell)")
            if by_block and (self.theta is None or self.ell is None):
                raise InvalidConfigError("AWB block tuning needs both theta and ell")
        elif self.method is BootstrapMethod.DWB:
            if self.ell is None:
                if not self.gamma:
                    raise InvalidConfigError("DWB needs ell, or a positive gamma to convert")
                self.ell = ell_from_gamma(self.theta or DEFAULT_THETA, self.gamma)
            if self.ell < 1.0:
                raise InvalidConfigError(f"DWB block length ell must be >= 1, got {self.ell:.4g}")
        return self

    @property
    def effective_gamma(self) -> float:
        """AR parameter of the multipliers (0 for the plain wild bootstrap)."""
        from trendbands.bootstrap import gamma_from_ell

        if self.method is BootstrapMethod.WB:
            return 0.0
        if self.gamma is not None:
            return self.gamma
        return gamma_from_ell(self.theta, self.ell)


# Simulation design


class ConstantVolatility(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["constant"] = "constant"
    sigma: float = Field(1.0, ge=0.0)


class CyclicalVolatility(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["cyclical"] = "cyclical"
    sigma0: float = 1.0
    sigma_star: float = 2.0
    a: float = 0.5
    k: float = 4.0

    @model_validator(mode="after")
    def check_positive(self) -> "CyclicalVolatility":
        from trendbands.simulation import check_volatility

        check_volatility(self.sigma0, self.sigma_star, self.a, self.k)
        return self


class NoMissing(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["none"] = "none"


class MarkovMissing(BaseModel):
    """P(D_t = 1 | D_t-1 = 0) = p01 and P(D_t = 1 | D_t-1 = 1) = p11."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["markov"] = "markov"
    p01: float = Field(0.20, ge=0.0, le=1.0)
    p11: float = Field(0.55, ge=0.0, le=1.0)


class SimulationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    label: str = ""
    n: int = Field(200, ge=10)
    beta1: float = -1.0
    beta2: float = 2.5
    lam: float = Field(10.0, gt=0.0, alias="lambda")
    c: float = Field(0.9, gt=0.0, lt=1.0)
    phi: float = Field(0.0, gt=-1.0, lt=1.0)
    psi: float = 0.0
    vol: Union[ConstantVolatility, CyclicalVolatility] = Field(
        default_factory=CyclicalVolatility, discriminator="kind"
    )
    missing: Union[NoMissing, MarkovMissing] = Field(default_factory=NoMissing, discriminator="kind")
    mc_reps: int = Field(1000, ge=1)
    bootstrap: BootstrapConfig
    alpha: float = Field(0.05, gt=0.0, lt=1.0)
    seed: int = Field(settings.DEFAULT_SEED, ge=0, le=MAX_SEED)

    @model_validator(mode="after")
    def check_eval_sets(self) -> "SimulationConfig":
        if not self.bootstrap.h < 0.2:
            raise InvalidConfigError("the coverage sets need h < 0.2")
        return self

    def config_hash(self) -> str:
        payload = self.model_dump_json(by_alias=True, exclude={"label"})
        return hashlib.sha256(payload.encode()).hexdigest()


class CoverageReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pointwise_coverage: float = Field(..., ge=0.0, le=1.0)
    simultaneous_coverage_gsub: float = Field(..., ge=0.0, le=1.0)
    simultaneous_coverage_g: float = Field(..., ge=0.0, le=1.0)
    median_length_pointwise: float
    median_length_gsub: float
    median_length_g: float
    mc_reps: int
    completed_reps: int
    dropped_reps: int = 0


# Command-line run configuration


def _default_candidates() -> List[float]:
    return [round(0.01 * i, 2) for i in range(1, 21)]


class CsvSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    delimiter: str = ","
    time_column: Union[str, int] = "time"
    value_column: Union[str, int] = "value"
    missing_tokens: List[str] = Field(default_factory=lambda: ["", "NA", "NaN"])
    date_format: Optional[str] = None
    period: Optional[str] = None

    @field_validator("delimiter")
    @classmethod
    def single_byte(cls, value: str) -> str:
        if len(value.encode()) != 1:
            raise InvalidConfigError(f"delimiter must be a single byte, got {value!r}")
        return value

    @model_validator(mode="after")
    def distinct_columns(self) -> "CsvSpec":
        if self.time_column == self.value_column:
            raise InvalidConfigError("time and value columns must differ")
        return self

    @property
    def uses_dates(self) -> bool:
        return self.date_format is not None or self.period is not None


class RunConfig(BaseModel):
    """Flat key/value run description; every subcommand reads the keys it needs."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    # input
    input: Optional[str] = None
    delimiter: str = ","
    time_column: Union[str, int] = "time"
    value_column: Union[str, int] = "value"
    missing_tokens: List[str] = Field(default_factory=lambda: ["", "NA", "NaN"])
    date_format: Optional[str] = None
    period: Optional[str] = None
    periods_per_year: Optional[float] = Field(None, gt=0.0)

    # estimation
    h: Optional[float] = Field(None, gt=0.0, lt=1.0)
    estimator: Estimator = Estimator.LOCAL_CONSTANT
    delta: Optional[float] = Field(None, ge=0.0, lt=0.5)
    k: int = Field(5, ge=0)
    candidates: List[float] = Field(default_factory=_default_candidates)

    # bootstrap and bands
    method: BootstrapMethod = BootstrapMethod.AWB
    gamma: Optional[float] = Field(None, ge=0.0, lt=1.0)
    theta: Optional[float] = Field(None, gt=0.0, lt=1.0)
    ell: Optional[float] = Field(None, gt=0.0)
    B: int = Field(999, ge=2)
    h_tilde: Optional[float] = Field(None, gt=0.0, lt=1.0)
    alpha: float = Field(0.05, gt=0.0, lt=1.0)
    subset: Literal["all", "G", "G_sub"] = "all"

    # simulation
    n: int = Field(200, ge=10)
    beta1: float = -1.0
    beta2: float = 2.5
    lam: float = Field(10.0, gt=0.0, alias="lambda")
    c: float = Field(0.9, gt=0.0, lt=1.0)
    phi: float = Field(0.0, gt=-1.0, lt=1.0)
    psi: float = 0.0
    vol: Literal["constant", "cyclical"] = "cyclical"
    sigma: float = Field(1.0, ge=0.0)
    sigma0: float = 1.0
    sigma_star: float = 2.0
    a: float = 0.5
    cycles: float = 4.0
    missing: Literal["none", "markov"] = "none"
    p01: float = Field(0.20, ge=0.0, le=1.0)
    p11: float = Field(0.55, ge=0.0, le=1.0)
    mc_reps: int = Field(1000, ge=1)
    label: str = ""

    # seasonal and spectral
    max_M: int = Field(7, ge=1)
    residuals_M: Optional[int] = Field(None, ge=1)
    detrend_M: Optional[int] = Field(None, ge=1)
    intercept: bool = False
    f_min: float = Field(0.01, gt=0.0)
    f_max: float = Field(6.0, gt=0.0)
    f_step: float = Field(0.01, gt=0.0)

    # run
    seed: int = Field(settings.DEFAULT_SEED, ge=0, le=MAX_SEED)
    output_dir: str = settings.OUTPUT_DIR
    workers: int = Field(settings.WORKERS, ge=1)
    store: bool = False

    @field_validator("input")
    @classmethod
    def input_exists(cls, value: Optional[str]) -> Optional[str]:
        if value is not None and not Path(value).is_file():
            raise InvalidConfigError(f"input file {value} does not exist")
        return value

    def csv_spec(self) -> CsvSpec:
        return CsvSpec(
            delimiter=self.delimiter,
            time_column=self.time_column,
            value_column=self.value_column,
            missing_tokens=self.missing_tokens,
            date_format=self.date_format,
            period=self.period,
        )

    def bootstrap_config(self, seed: Optional[int] = None) -> BootstrapConfig:
        if self.h is None:
            raise InvalidConfigError("bandwidth h is required")
        gamma = self.gamma
        if self.method is BootstrapMethod.AWB and gamma is None and self.theta is None and self.ell is None:
            gamma = 0.5
        return BootstrapConfig(
            method=self.method,
            gamma=gamma if self.method is not BootstrapMethod.WB else None,
            theta=self.theta,
            ell=self.ell,
            B=self.B,
            h=self.h,
            h_tilde=self.h_tilde,
            seed=self.seed if seed is None else seed,
            estimator=self.estimator,
        )

    def simulation_config(self) -> SimulationConfig:
        vol: Union[ConstantVolatility, CyclicalVolatility]
        if self.vol == "constant":
            vol = ConstantVolatility(sigma=self.sigma)
        else:
            vol = CyclicalVolatility(sigma0=self.sigma0, sigma_star=self.sigma_star, a=self.a, k=self.cycles)
        missing = MarkovMissing(p01=self.p01, p11=self.p11) if self.missing == "markov" else NoMissing()
        return SimulationConfig(
            label=self.label,
            n=self.n,
            beta1=self.beta1,
            beta2=self.beta2,
            lam=self.lam,
            c=self.c,
            phi=self.phi,
            psi=self.psi,
            vol=vol,
            missing=missing,
            mc_reps=self.mc_reps,
            bootstrap=self.bootstrap_config(),
            alpha=self.alpha,
            seed=self.seed,
        )

    def frequencies(self) -> np.ndarray:
        if self.f_max <= self.f_min:
            raise InvalidConfigError("f_max must exceed f_min")
        count = int(np.floor((self.f_max - self.f_min) / self.f_step + 1e-9)) + 1
        return np.round(self.f_min + self.f_step * np.arange(count), 12)


class RunMetadata(BaseModel):
    model_config = ConfigDict(extra="forbid")

    subcommand: str
    version: str
    seed: int
    config: Dict[str, Any]
    outputs: List[str] = Field(default_factory=list)
    results: Dict[str, Any] = Field(default_factory=dict)
