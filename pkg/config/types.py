from typing import Optional, TypedDict
from enum import Enum

class TCookieSetConfig(TypedDict, total=False):
  kind: str
  lo: float
  hi: float

class TEnvironmentConfig(TypedDict, total=False):
  family: str
  p_lo: float
  p_hi: float
  seed: int
  axis: int

# "lambda" is a keyword, hence the functional form
TDeclaredConstants = TypedDict(
  "TDeclaredConstants",
  {"K": Optional[float], "lambda": Optional[float], "h": Optional[float],
   "r": Optional[float], "kappa": Optional[float]},
  total=False,
)

class TModelConfig(TypedDict):
  kernel: str
  d: int
  p: float
  ell: list[float]
  cookie_set: TCookieSetConfig
  declared_K: Optional[float]
  table: Optional[str]
  environment: TEnvironmentConfig
  declared: TDeclaredConstants

class TRunConfig(TypedDict):
  horizon: int
  horizons: Optional[list[int]]
  replicas: int
  master_seed: int
  threads: int
  store_path: str
  ring_size: int
  safety_window: int

class TAnalysisConfig(TypedDict):
  estimators: list[str]
  alpha0: float
  delta: float
  b_grid: list[float]
  ci_level: float
  confirm_margin: float
  batch_size: int
  probe_count: int
  radius_max: float
  azuma_multiples: list[float]

class TOutputConfig(TypedDict):
  directory: str
  formats: list[str]
  trajectory_dump: bool

class TLabConfig(TypedDict):
  MODEL_CONFIG: TModelConfig
  RUN_CONFIG: TRunConfig
  ANALYSIS_CONFIG: TAnalysisConfig
  OUTPUT_CONFIG: TOutputConfig
  CHECKS_CONFIG: dict

class KernelKind(Enum):
  STANDARD_ERW = "standard_erw"
  GENERALIZED = "generalized"
  MARTINGALE = "martingale"
  ERWRE = "erwre"

class CookieSetKind(Enum):
  ALL = "all"
  NONE = "none"
  DEPLETED_STRIP = "depleted_strip"
  HALF_SPACE = "half_space"

class RenewalPhase(Enum):
  SEEKING_S = "seeking_S"
  WATCHING_D = "watching_D"

class PathStorage(Enum):
  NONE = "none"
  RING = "ring"
  FULL = "full"

class ExitCode(Enum):
  OK = 0
  CONDITION_VIOLATION = 1
  CONFIG_ERROR = 2
  MISSING_INPUT = 3
