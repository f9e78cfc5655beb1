"""HTTP surface: POST /features, GET /handshake, GET /healthz.

Stateless across requests; the only state is the loaded backbone.
"""

from __future__ import annotations

import base64
import binascii

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .backbones import BackboneSettings, BadImage, build_backbone


def create_app(settings: BackboneSettings) -> FastAPI:
    backbone = build_backbone(settings)
    app = FastAPI(title="resel feature adapter", version="0.1.0")
    app.state.backbone = backbone

    @app.get("/healthz")
    def healthz():
        if not backbone.ready:
            return JSONResponse(status_code=503, content={"status": "loading"})
        return {"status": "ok"}

    @app.get("/handshake")
    def handshake():
        if not backbone.ready:
            return JSONResponse(status_code=503, content={"status": "loading"})
        return backbone.handshake()

    @app.post("/features")
    def features(body: dict):
        if not backbone.ready:
            return JSONResponse(status_code=503, content={"status": "loading"})
        query = body.get("query", "")
        if not isinstance(query, str) or not query:
            return JSONResponse(status_code=400, content={"error": "query is required"})
        image_b64 = body.get("image_b64")
        if not isinstance(image_b64, str):
            return JSONResponse(status_code=400, content={"error": "image_b64 is required"})
        try:
            image_bytes = base64.b64decode(image_b64, validate=True)
        except (binascii.Error, ValueError) as exc:
            return JSONResponse(status_code=400, content={"error": f"invalid base64: {exc}"})
        try:
            vector = backbone.features(image_bytes, query)
        except BadImage as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        return {"vector": [float(v) for v in vector]}

    return app
