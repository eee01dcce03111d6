import logging
import os
import subprocess
from pathlib import Path
from typing import Dict, Optional

from dotenv import dotenv_values, load_dotenv

load_dotenv()

# Configuration
APP_VERSION = "0.1.0"
OUT_DIR = os.getenv("STREAMDMT_OUT_DIR", "runs")
LOG_LEVEL = os.getenv("STREAMDMT_LOG_LEVEL", "INFO")
WORKERS = int(os.getenv("STREAMDMT_WORKERS", "1"))
DATABASE_URL = os.getenv("DATABASE_URL", "sqlite:///streamdmt_runs.db")
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(verbose: bool = False):
    level = logging.DEBUG if verbose else getattr(logging, LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT)


def load_run_file(path: str) -> Dict[str, Optional[str]]:
    """KEY=value run file; keys are long flag names with '-' replaced by '_'"""
    if not Path(path).is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return {k.strip().lower(): v for k, v in dotenv_values(path).items()}


def describe_version() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return APP_VERSION
