"""
Router for the metrics module
"""

from typing import List, Literal

from fastapi import APIRouter, HTTPException
from pydantic import BaseModel, Field

from app.core.errors import LabError
from app.modules.metrics import services

router = APIRouter(prefix="/bleu", tags=["metrics"])


class BleuRequest(BaseModel):
    """Request body for corpus BLEU scoring."""

    hyps: List[str] = Field(..., description="System outputs, one per segment")
    refs: List[str] = Field(..., description="References, aligned with hyps")
    mode: Literal["word", "char"] = Field("word", description="word for ms/id targets, char for zh")
    scale: float = Field(100.0, gt=0, description="Reporting multiplier")


@router.post("")
async def score_bleu(body: BleuRequest):
    """Corpus BLEU over aligned hypothesis/reference lists."""
    if len(body.hyps) != len(body.refs):
        raise HTTPException(status_code=400, detail="hyps and refs must have the same length")
    cfg = services.BleuConfig(tokenizer_mode=body.mode, scale=body.scale)
    try:
        report = services.corpus_bleu(zip(body.hyps, body.refs), cfg)
    except LabError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return report.to_serializable_dict()
