import os
from dotenv import dotenv_values
from pathlib import Path


ROOT_DIR = Path(__file__).resolve(strict=True).parent
config = dotenv_values(".env")

__get_env = lambda key, default=None: config.get(key, os.environ.get(key, default))

TOOL_VERSION = "0.3.0"
CONFIG_FILE_PATH = ROOT_DIR / "config.json"
OUTPUT_ROOT = Path(__get_env("ERW_LAB_OUTPUT_DIR", "runs"))
DEFAULT_THREADS = int(__get_env("ERW_LAB_THREADS", "1"))
