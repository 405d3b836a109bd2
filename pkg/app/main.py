"""
Application entry point - FastAPI

Serves BLEU scoring and the translation protocol used by the external
back-translation provider.
"""

import logging
from pathlib import Path
from typing import Dict, Optional

from fastapi import FastAPI

from app.config import settings
from app.core.errors import LabError
from app.core.logs import configure_logging
from app.modules.decoding import Translator
from app.modules.decoding import router as decoding_router
from app.modules.metrics import router as metrics_router

logger = logging.getLogger(__name__)

# Create FastAPI app
app = FastAPI(title=settings.APP_NAME, version=settings.APP_VERSION, debug=settings.DEBUG)

# Translators keyed by "src-tgt"; filled at startup
app.state.translators = {}

# Include routers from all modules
app.include_router(metrics_router)
app.include_router(decoding_router)


def load_translators(run_dir: Optional[Path]) -> Dict[str, Translator]:
    """Every <run>/<direction>/translator folder found under run_dir."""
    translators: Dict[str, Translator] = {}
    if run_dir is None:
        return translators
    if not run_dir.is_dir():
        logger.warning("Serve directory %s does not exist", run_dir)
        return translators
    for folder in sorted(run_dir.glob("*/translator")):
        try:
            translator = Translator.load(folder)
        except LabError as exc:
            logger.error("Failed to load translator from %s: %s", folder, exc)
            continue
        translators[translator.direction] = translator
        logger.info("Serving %s from %s", translator.direction, folder)
    return translators


@app.get("/")
async def root():
    return {
        "app": settings.APP_NAME,
        "version": settings.APP_VERSION,
        "translators": sorted(app.state.translators),
    }


# Startup event - load the translators to serve
@app.on_event("startup")
async def startup_event():
    configure_logging()
    if not app.state.translators:
        app.state.translators = load_translators(settings.SERVE_DIR)
    logger.info("Loaded %d translators", len(app.state.translators))
