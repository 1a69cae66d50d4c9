import json

import pytest

from config.types import KernelKind
from utils.config_loader import (
    build_direction,
    build_kernel,
    cross_check_declared,
    declared_constants,
    deep_merge,
    load_config,
    parse_config_text,
    run_horizons,
)
from utils.errors import ConfigError, ValidationError


def _write(tmp_path, record) -> str:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(record))
    return path


def test_deep_merge_keeps_untouched_keys() -> None:
    merged = deep_merge({"A": {"x": 1, "y": 2}}, {"A": {"y": 3}})
    assert merged == {"A": {"x": 1, "y": 3}}


def test_parse_error_names_line_and_column() -> None:
    with pytest.raises(ConfigError, match=r"cfg:2:\d+"):
        parse_config_text('{\n  "MODEL_CONFIG": ,\n}', "cfg")


def test_defaults_load_without_a_file() -> None:
    config = load_config()
    assert config["MODEL_CONFIG"]["kernel"] == "standard_erw"
    assert run_horizons(config) == [10000]


def test_unknown_section_is_rejected(tmp_path) -> None:
    with pytest.raises(ConfigError, match="unknown section"):
        load_config(_write(tmp_path, {"LIGHTS": {}}))


@pytest.mark.parametrize("section,key,value", [
    ("MODEL_CONFIG", "kernel", "levy"),
    ("MODEL_CONFIG", "d", 1),
    ("MODEL_CONFIG", "ell", [0.0, 0.0]),
    ("RUN_CONFIG", "replicas", 0),
    ("RUN_CONFIG", "store_path", "disk"),
    ("ANALYSIS_CONFIG", "estimators", ["speed", "magic"]),
    ("ANALYSIS_CONFIG", "b_grid", [0.5, 1.0]),
    ("OUTPUT_CONFIG", "formats", ["xml"]),
])
def test_invalid_values_are_config_errors(tmp_path, section, key, value) -> None:
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, {section: {key: value}}))


def test_horizon_grid_is_sorted_and_unique() -> None:
    config = load_config(overrides={"RUN_CONFIG": {"horizons": [1000, 100, 1000]}})
    assert run_horizons(config) == [100, 1000]


def test_build_kernels() -> None:
    config = load_config(overrides={"MODEL_CONFIG": {"kernel": "generalized", "table": "knight_push"}})
    assert build_kernel(config).kind == KernelKind.GENERALIZED
    config = load_config(overrides={"MODEL_CONFIG": {"kernel": "martingale"}})
    assert build_kernel(config).name == "symmetric"
    config = load_config(overrides={"MODEL_CONFIG": {"kernel": "erwre"}})
    kernel = build_kernel(config)
    assert kernel.environment.p_lo == 0.6


def test_unknown_table_is_a_config_error() -> None:
    config = load_config(overrides={"MODEL_CONFIG": {"kernel": "generalized", "table": "nope"}})
    with pytest.raises(ConfigError):
        build_kernel(config)


def test_bad_p_is_rejected_by_the_kernel() -> None:
    config = load_config(overrides={"MODEL_CONFIG": {"p": 0.4}})
    with pytest.raises(ValidationError):
        build_kernel(config)


def test_direction_is_normalized_from_config() -> None:
    config = load_config(overrides={"MODEL_CONFIG": {"ell": [2.0, 0.0]}})
    assert build_direction(config).ell == (1.0, 0.0)


def test_declared_constants_are_cross_checked() -> None:
    config = load_config(overrides={"MODEL_CONFIG": {"declared_K": 2.0, "declared": {"lambda": 0.2}}})
    declared = declared_constants(config)
    assert declared == {"K": 2.0, "lambda": 0.2}
    cross_check_declared(declared, {"K": 1.0, "lambda": 0.25})
    with pytest.raises(ValidationError):
        cross_check_declared({"lambda": 0.3}, {"lambda": 0.25})
    with pytest.raises(ValidationError):
        cross_check_declared({"K": 0.5}, {"K": 1.0})
