"""
Loads config.json-style files: parse, merge over DEFAULT_CONFIG, check, and
turn the model section into a KernelSpec and a Direction.
"""
import copy
import json
import math
from dataclasses import replace
from pathlib import Path
from typing import Optional

from config.defaults import ALL_ESTIMATORS, DEFAULT_CONFIG
from config.kernel_tables import kernel_tables
from config.types import KernelKind, PathStorage, TLabConfig
from environment import EnvironmentModel
from model import CookieSet, Direction, KernelSpec, StepDistribution
from utils.errors import ConfigError, ContractViolation, ValidationError

SECTIONS = ("MODEL_CONFIG", "RUN_CONFIG", "ANALYSIS_CONFIG", "OUTPUT_CONFIG", "CHECKS_CONFIG")
FORMATS = ("json", "csv")


def deep_merge(base: dict, override: dict) -> dict:
  merged = copy.deepcopy(base)
  for key, value in override.items():
    if isinstance(value, dict) and isinstance(merged.get(key), dict):
      merged[key] = deep_merge(merged[key], value)
    else:
      merged[key] = copy.deepcopy(value)
  return merged


def parse_config_text(text: str, source: str = "<config>") -> dict:
  try:
    record = json.loads(text)
  except json.JSONDecodeError as err:
    raise ConfigError(f"{source}:{err.lineno}:{err.colno}: {err.msg}")
  if not isinstance(record, dict):
    raise ConfigError(f"{source}:1:1: top level must be an object with sections {', '.join(SECTIONS)}")
  return record


def load_config(path: Optional[Path] = None, overrides: Optional[dict] = None) -> TLabConfig:
  user = {}
  if path is not None:
    path = Path(path)
    if not path.exists():
      raise ConfigError(f"{path}: config file not found")
    user = parse_config_text(path.read_text(), str(path))
  unknown = sorted(set(user) - set(SECTIONS))
  if unknown:
    raise ConfigError(f"{path}: unknown section(s) {unknown}; expected {list(SECTIONS)}")
  config = deep_merge(DEFAULT_CONFIG, user)
  if overrides:
    config = deep_merge(config, overrides)
  validate_config(config)
  return config


def _require(condition: bool, message: str):
  if not condition:
    raise ConfigError(message)


def validate_config(config: TLabConfig):
  model, run = config["MODEL_CONFIG"], config["RUN_CONFIG"]
  analysis, output = config["ANALYSIS_CONFIG"], config["OUTPUT_CONFIG"]

  kinds = [kind.value for kind in KernelKind]
  _require(model["kernel"] in kinds, f"MODEL_CONFIG.kernel must be one of {kinds}, got {model['kernel']!r}")
  _require(isinstance(model["d"], int) and model["d"] >= 2, f"MODEL_CONFIG.d must be an integer >= 2, got {model['d']!r}")
  ell = model["ell"]
  _require(isinstance(ell, list) and len(ell) == model["d"],
           f"MODEL_CONFIG.ell must have length d={model['d']}, got {ell!r}")
  _require(math.fsum(float(c) ** 2 for c in ell) > 0, "MODEL_CONFIG.ell is the zero vector")

  horizons = run.get("horizons") or [run["horizon"]]
  _require(all(isinstance(n, int) and n >= 1 for n in horizons), f"RUN_CONFIG horizons must be >= 1, got {horizons}")
  _require(isinstance(run["replicas"], int) and run["replicas"] >= 1, f"RUN_CONFIG.replicas must be >= 1, got {run['replicas']!r}")
  _require(isinstance(run["threads"], int) and run["threads"] >= 1, f"RUN_CONFIG.threads must be >= 1, got {run['threads']!r}")
  _require(0 <= int(run["master_seed"]) < 2 ** 64, f"RUN_CONFIG.master_seed must be an unsigned 64-bit integer")
  storages = [s.value for s in PathStorage]
  _require(run["store_path"] in storages, f"RUN_CONFIG.store_path must be one of {storages}")
  _require(run["safety_window"] >= 0, "RUN_CONFIG.safety_window must be >= 0")

  unknown = sorted(set(analysis["estimators"]) - set(ALL_ESTIMATORS))
  _require(not unknown, f"ANALYSIS_CONFIG.estimators: unknown {unknown}; known {ALL_ESTIMATORS}")
  _require(0 < analysis["ci_level"] < 1, "ANALYSIS_CONFIG.ci_level must be in (0, 1)")
  _require(analysis["delta"] > 0, "ANALYSIS_CONFIG.delta must be positive")
  _require(analysis["confirm_margin"] >= 0, "ANALYSIS_CONFIG.confirm_margin must be >= 0")
  _require(analysis["batch_size"] >= 1, "ANALYSIS_CONFIG.batch_size must be >= 1")
  _require(all(0 < b < 1 for b in analysis["b_grid"]), "ANALYSIS_CONFIG.b_grid values must lie in (0, 1)")

  bad = sorted(set(output["formats"]) - set(FORMATS))
  _require(not bad, f"OUTPUT_CONFIG.formats: unknown {bad}; known {list(FORMATS)}")


def run_horizons(config: TLabConfig) -> list[int]:
  run = config["RUN_CONFIG"]
  return sorted(set(run.get("horizons") or [run["horizon"]]))


def build_direction(config: TLabConfig) -> Direction:
  try:
    return Direction.from_vector(config["MODEL_CONFIG"]["ell"])
  except ContractViolation as err:
    raise ConfigError(f"MODEL_CONFIG.ell: {err}")


def _table_record(name_or_record) -> dict:
  if isinstance(name_or_record, dict):
    return name_or_record
  if name_or_record not in kernel_tables:
    raise ConfigError(f"MODEL_CONFIG.table: unknown table {name_or_record!r}; known {sorted(kernel_tables)}")
  return kernel_tables[name_or_record]


def build_kernel(config: TLabConfig, direction: Optional[Direction] = None) -> KernelSpec:
  """Kernel for the model section. Construction errors surface as ValidationError."""
  model = config["MODEL_CONFIG"]
  direction = direction or build_direction(config)
  d = model["d"]
  cookie_set = CookieSet.from_config(model.get("cookie_set") or {}, direction)
  kind = KernelKind(model["kernel"])

  if kind == KernelKind.STANDARD_ERW:
    kernel = KernelSpec.standard_erw(float(model["p"]), d, cookie_set)
  elif kind == KernelKind.GENERALIZED:
    _require(model.get("table") is not None, "generalized kernel needs MODEL_CONFIG.table")
    record = _table_record(model["table"])
    if record["d"] != d:
      raise ConfigError(f"table has d={record['d']}, MODEL_CONFIG.d={d}")
    name = model["table"] if isinstance(model["table"], str) else "generalized"
    kernel = KernelSpec.from_table(record, cookie_set, name=name)
  elif kind == KernelKind.MARTINGALE:
    if model.get("table") is None:
      kernel = KernelSpec.symmetric(d)
    else:
      record = _table_record(model["table"])
      revisit = next(c for c in record["contexts"] if not c["first_visit"])
      kernel = KernelSpec.martingale(StepDistribution.from_records(revisit["outcomes"]), record["declared_K"])
  else:
    env = EnvironmentModel.from_config(d, model["environment"], model.get("declared"))
    kernel = KernelSpec.erwre(env, cookie_set)

  if model.get("declared_K") is not None:
    kernel = replace(kernel, declared_K=float(model["declared_K"]))
  return kernel


def declared_constants(config: TLabConfig) -> dict:
  declared = dict(config["MODEL_CONFIG"].get("declared") or {})
  if config["MODEL_CONFIG"].get("declared_K") is not None:
    declared["K"] = config["MODEL_CONFIG"]["declared_K"]
  return {key: value for key, value in declared.items() if value is not None}


def cross_check_declared(declared: dict, computed: dict, tolerance: float = 1e-12):
  """A declared bound may be weaker than the computed one, never stronger."""
  # K is an upper bound; lambda, h, r, kappa are lower bounds
  for key, value in declared.items():
    if key not in computed or computed[key] is None:
      continue
    actual = computed[key]
    if key == "K" and value < actual - tolerance:
      raise ValidationError(f"declared K={value} is below the largest jump {actual}")
    if key != "K" and value > actual + tolerance:
      raise ValidationError(f"declared {key}={value} exceeds the computed {actual}")
