"""
Global application settings
"""

import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

BASE_DIR = Path(__file__).resolve().parent
DATA_DIR = BASE_DIR / "data"


def _env_bool(name: str, default: bool) -> bool:
    raw = os.getenv(name)
    if raw is None:
        return default
    return raw.strip().lower() in {"1", "true", "yes", "on"}


class Settings:
    """Application settings"""

    APP_NAME: str = "lrnmt-lab"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = _env_bool("LRNMT_DEBUG", False)
    LOG_LEVEL: str = os.getenv("LRNMT_LOG_LEVEL", "INFO")

    # Paths
    DATA_DIR: Path = DATA_DIR
    TEMPLATES_DIR: Path = BASE_DIR / "shared" / "templates"
    SIMPLIFICATION_TABLE: Path = Path(
        os.getenv("LRNMT_SIMPLIFICATION_TABLE", str(DATA_DIR / "trad2simp.tsv"))
    )
    TOY_CONFIG: Path = DATA_DIR / "toy_pipeline.json"
    OUTPUT_DIR: Path = Path(os.getenv("LRNMT_OUTPUT_DIR", "runs"))
    # Run directory whose translators are served by POST /translate
    SERVE_DIR: Optional[Path] = (
        Path(os.environ["LRNMT_SERVE_DIR"]) if os.getenv("LRNMT_SERVE_DIR") else None
    )

    # Numeric reductions are bit-deterministic only with a single thread
    NUM_THREADS: int = int(os.getenv("LRNMT_NUM_THREADS", "1"))


settings = Settings()
