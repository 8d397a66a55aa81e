"""HTTP serving layer exposing POST /translate.

The request body is parsed by hand instead of a pydantic model so that a
malformed body yields HTTP 400 (framework validation would answer 422).
"""

from __future__ import annotations

from typing import Any, Callable

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .model import ProxyLM, decode_ids, encode_text
from .settings import BackendSettings

DEFAULT_DECODE = {
    "beam_size": 3,
    "max_new_tokens": 256,
    "length_penalty": 1.0,
    "sampling": False,
}

Recorder = Callable[[dict[str, Any]], None]


class BadRequest(ValueError):
    pass


def _parse_body(body: Any) -> tuple[list[str], str, str, dict[str, Any]]:
    if not isinstance(body, dict):
        raise BadRequest("request body must be a JSON object")
    texts = body.get("texts")
    if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
        raise BadRequest("texts must be a list of strings")
    src_lang = body.get("src_lang", "ja")
    tgt_lang = body.get("tgt_lang", "en")
    if not isinstance(src_lang, str) or not isinstance(tgt_lang, str):
        raise BadRequest("src_lang and tgt_lang must be strings")
    decode = dict(DEFAULT_DECODE)
    if "beam_size" in body:
        if not isinstance(body["beam_size"], int) or isinstance(body["beam_size"], bool):
            raise BadRequest("beam_size must be an integer")
        if body["beam_size"] < 1:
            raise BadRequest("beam_size must be >= 1")
        decode["beam_size"] = body["beam_size"]
    if "max_new_tokens" in body:
        if not isinstance(body["max_new_tokens"], int) or isinstance(
            body["max_new_tokens"], bool
        ):
            raise BadRequest("max_new_tokens must be an integer")
        if body["max_new_tokens"] < 1:
            raise BadRequest("max_new_tokens must be >= 1")
        decode["max_new_tokens"] = body["max_new_tokens"]
    if "length_penalty" in body:
        if not isinstance(body["length_penalty"], (int, float)) or isinstance(
            body["length_penalty"], bool
        ):
            raise BadRequest("length_penalty must be a number")
        decode["length_penalty"] = float(body["length_penalty"])
    if "sampling" in body:
        if not isinstance(body["sampling"], bool):
            raise BadRequest("sampling must be a boolean")
        decode["sampling"] = body["sampling"]
    return texts, src_lang, tgt_lang, decode


def create_app(
    settings: BackendSettings,
    model: ProxyLM | None = None,
    recorder: Recorder | None = None,
) -> FastAPI:
    if settings.echo_mode and model is not None:
        raise ValueError("echo_mode must not receive a model")
    if not settings.echo_mode and model is None:
        raise ValueError("model mode requires a loaded model")

    app = FastAPI()
    app.state.settings = settings
    app.state.model = model

    @app.post("/translate")
    async def translate(request: Request) -> JSONResponse:
        try:
            body = await request.json()
        except Exception:
            return JSONResponse({"error": "body is not valid JSON"}, status_code=400)
        try:
            texts, _src, _tgt, decode = _parse_body(body)
        except BadRequest as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        if recorder is not None:
            recorder(
                {"mode": "echo" if settings.echo_mode else "model", **decode}
            )
        if settings.echo_mode:
            translations = [f"ECHO:{t}" for t in texts]
            return JSONResponse({"translations": translations, "decode": decode})
        try:
            translations = [
                decode_ids(
                    model.generate(
                        encode_text(text),
                        beam_size=decode["beam_size"],
                        max_new_tokens=decode["max_new_tokens"],
                        length_penalty=decode["length_penalty"],
                        sampling=decode["sampling"],
                    )
                )
                for text in texts
            ]
        except Exception as exc:
            return JSONResponse(
                {"error": f"generation failed: {exc}"}, status_code=500
            )
        return JSONResponse({"translations": translations, "decode": decode})

    return app
