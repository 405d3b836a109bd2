"""
Router for the decoding module

POST /translate is the protocol spoken by the external back-translation
provider, served from the translators loaded at startup.
"""

from fastapi import APIRouter, HTTPException, Request
from pydantic import BaseModel, Field

from app.core.errors import LabError

router = APIRouter(prefix="/translate", tags=["decoding"])


class TranslateRequest(BaseModel):
    src_lang: str = Field(..., description="Language tag of the text")
    tgt_lang: str = Field(..., description="Language tag to translate into")
    text: str = Field(..., description="Sentence to translate")


class TranslateResponse(BaseModel):
    text: str


@router.post("", response_model=TranslateResponse)
async def translate(body: TranslateRequest, request: Request):
    translators = getattr(request.app.state, "translators", {})
    translator = translators.get(f"{body.src_lang}-{body.tgt_lang}")
    if translator is None:
        raise HTTPException(
            status_code=404, detail=f"no translator for {body.src_lang}-{body.tgt_lang}"
        )
    try:
        text = translator.translate(body.text)
    except (LabError, ValueError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return TranslateResponse(text=text)
