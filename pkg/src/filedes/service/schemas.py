"""Request and response bodies of the node API. Binary payloads travel as hex."""

from __future__ import annotations

from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field


class ErrorBody(BaseModel):
    error: str = Field(..., examples=["MalformedProof"])
    detail: str = ""


class PutRequest(BaseModel):
    file_id: str = Field(..., min_length=1, examples=["report.txt"])
    data: str = Field(..., description="file contents, hex")
    ctr: int = Field(3, ge=1, le=64)
    plan: Literal["a", "b"] = "a"
    keys: Optional[List[str]] = Field(None, description="hex key records from keygen, one per replica")


class PutResponse(BaseModel):
    file_id: str
    version: int
    kind: str
    cids: List[str]
    miners: List[str]
    increment_size: int
    stored_bytes: int
    epoch: int


class RetrieveResponse(BaseModel):
    file_id: str
    version: Optional[int] = None
    data: str


class ChallengeRequest(BaseModel):
    cid: str


class ChallengeResponse(BaseModel):
    cid: str
    challenge: str
    root: str
    leaf_count: int
    miner_id: str


class ProveRequest(BaseModel):
    cid: str
    challenge: str
    rounds: Optional[int] = Field(None, ge=1, description="omit for a single PoS")


class ProveResponse(BaseModel):
    cid: str
    proof: str


class VerifyRequest(BaseModel):
    proof: str
    root: str
    challenge: str


class VerifyResponse(BaseModel):
    valid: bool
    cid: str
    kind: str


class RollupRequest(BaseModel):
    epoch: int = Field(..., ge=0)


class RollupResponse(BaseModel):
    epoch: int
    members: int
    tier: int
    record: str
    outcomes: Dict[str, str]


class StatusResponse(BaseModel):
    height: int
    events: int
    head: str
    deals: int
    files: Dict[str, int]
    aggregates: List[int]
    penalties: int
