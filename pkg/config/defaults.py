from config.types import TLabConfig

ALL_ESTIMATORS = [
    "speed",
    "covariance",
    "direct_speed",
    "regen_tail",
    "range_exponent",
    "local_time",
    "escape",
    "clt",
    "site_local_time",
    "advance",
    "regeneration_rate",
    "lag_autocorrelation",
]

DEFAULT_CONFIG: TLabConfig = {
    "MODEL_CONFIG": {
        "kernel": "standard_erw",
        "d": 2,
        "p": 0.75,
        "ell": [1.0, 0.0],
        "cookie_set": {"kind": "all"},
        "declared_K": None,
        "table": None,
        "environment": {"family": "site-bias", "p_lo": 0.6, "p_hi": 0.9, "seed": 7, "axis": 0},
        "declared": {"K": None, "lambda": None, "h": None, "r": None, "kappa": None},
    },
    "RUN_CONFIG": {
        "horizon": 10000,
        "horizons": None,
        "replicas": 200,
        "master_seed": 20080611,
        "threads": 1,
        "store_path": "none",
        "ring_size": 4096,
        "safety_window": 0,
    },
    "ANALYSIS_CONFIG": {
        "estimators": ALL_ESTIMATORS,
        "alpha0": 0.05,
        "delta": 0.1,
        "b_grid": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
        "ci_level": 0.95,
        "confirm_margin": 0.0,
        "batch_size": 32,
        "probe_count": 1024,
        "radius_max": 200.0,
        "azuma_multiples": [1.0, 2.0, 3.0],
    },
    "OUTPUT_CONFIG": {
        "directory": "default",
        "formats": ["json", "csv"],
        "trajectory_dump": False,
    },
    # scales of the end-to-end theory-check suite
    "CHECKS_CONFIG": {
        "oracle_paths": 1000,
        "oracle_horizon": 2000,
        "speed_horizon": 10000,
        "speed_replicas": 500,
        "range_horizons": [1000, 3000, 10000],
        "range_replicas": 200,
        "tail_horizon": 10000,
        "tail_replicas": 200,
        "escape_horizons": [1000, 10000],
        "escape_replicas": 500,
        "clt_env": {"p_lo": 0.6, "p_hi": 0.9},
        "clt_horizon": 10000,
        "clt_replicas": 40,
        "clt_min_blocks": 10000,
        "azuma_horizon": 1000,
        "azuma_replicas": 100000,
        "submart_radius": 200.0,
    },
}
