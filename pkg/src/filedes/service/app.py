"""HTTP front end of a single node.

Protocol errors come back as ``{"error": <name>, "detail": ...}`` with a 4xx
status: 404 for unknown objects, 409 for state conflicts, 422 for anything
the caller sent wrong or that failed verification.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .. import errors
from ..node import Node, load_key
from .schemas import (ChallengeRequest, ChallengeResponse, ProveRequest, ProveResponse, PutRequest, PutResponse,
                      RetrieveResponse, RollupRequest, RollupResponse, StatusResponse, VerifyRequest,
                      VerifyResponse)

_STATUS = {
    errors.UnknownCid: 404,
    errors.NotStored: 404,
    errors.RetrieveFailed: 404,
    errors.DuplicateAggregate: 409,
    errors.DuplicateDeal: 409,
    errors.NoEligibleMiner: 409,
}


def _detail(exc: Exception) -> str:
    return str(exc.args[0]) if exc.args else ""


def _unhex(value: str, field: str) -> bytes:
    try:
        return bytes.fromhex(value)
    except ValueError:
        raise errors.ConfigInvalid(field, "must be hex") from None


def create_app(home, rsa_bits: int = 2048, node: Optional[Node] = None) -> FastAPI:
    node = node or Node(home, rsa_bits=rsa_bits)
    app = FastAPI(title="filedes node", version="0.1.0")
    app.state.node = node

    @app.exception_handler(errors.FileDESError)
    async def protocol_error(request: Request, exc: errors.FileDESError):
        status = next((s for cls, s in _STATUS.items() if isinstance(exc, cls)), 422)
        return JSONResponse({"error": exc.code, "detail": _detail(exc)}, status_code=status)

    @app.exception_handler(RequestValidationError)
    async def bad_request(request: Request, exc: RequestValidationError):
        return JSONResponse({"error": "BadRequest", "detail": str(exc.errors()[:1])}, status_code=400)

    @app.get("/status", response_model=StatusResponse)
    def status():
        return node.status()

    @app.post("/files", response_model=PutResponse)
    def put(req: PutRequest):
        keys = [load_key(_unhex(k, "keys")) for k in req.keys] if req.keys else None
        return node.put(req.file_id, _unhex(req.data, "data"), req.ctr, req.plan, keys)

    @app.get("/files/{file_id:path}", response_model=RetrieveResponse)
    def get(file_id: str, version: Optional[int] = None):
        return RetrieveResponse(file_id=file_id, version=version, data=node.retrieve(file_id, version).hex())

    @app.post("/challenges", response_model=ChallengeResponse)
    def challenge(req: ChallengeRequest):
        return node.challenge(req.cid)

    @app.post("/proofs", response_model=ProveResponse)
    def prove(req: ProveRequest):
        return ProveResponse(cid=req.cid, proof=node.prove(req.cid, req.challenge, req.rounds).hex())

    @app.post("/verify", response_model=VerifyResponse)
    def verify(req: VerifyRequest):
        return node.verify(_unhex(req.proof, "proof"), req.root, req.challenge)

    @app.post("/rollups", response_model=RollupResponse)
    def rollup(req: RollupRequest):
        return node.rollup_epoch(req.epoch)

    return app
