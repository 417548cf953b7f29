"""Pydantic request/response models for the inference service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field, field_validator


class GeometryPayload(BaseModel):
    coords: list[list[float]] = Field(..., description="N x 3 coordinates in Angstrom")
    elements: Optional[list[str]] = Field(
        None, description="Element symbols; defaults to all hydrogen"
    )
    edges: Optional[list[tuple[int, int]]] = Field(
        None, description="Matched orbital pairs; computed if omitted"
    )

    @field_validator("coords")
    @classmethod
    def _three_wide(cls, value):
        if not value:
            raise ValueError("coords must contain at least one atom")
        if any(len(row) != 3 for row in value):
            raise ValueError("every coordinate row needs exactly 3 components")
        return value


class PredictRequest(GeometryPayload):
    pass


class PredictResponse(BaseModel):
    n: int
    edges: list[tuple[int, int]]
    a_upper: list[float]
    m_oo: list[list[float]]
    elapsed_ms: float


class EnergyRequest(GeometryPayload):
    mode: Literal["predicted", "givens", "optimized"] = "predicted"
    m_oo: Optional[list[list[float]]] = Field(
        None, description="Explicit orbital rotation; overrides mode"
    )


class EnergyResponse(BaseModel):
    mode: str
    e_spa: float
    e_nn: float
    theta_opt: list[float]
    edges: list[tuple[int, int]]
    elapsed_ms: float


class WarmStartRequest(GeometryPayload):
    start: Literal["predicted", "givens"] = "predicted"


class WarmStartResponse(BaseModel):
    start: str
    e_start: float
    e_warm: float
    edges: list[tuple[int, int]]
    m_oo: list[list[float]]
    elapsed_ms: float


class ModelInfoResponse(BaseModel):
    schema_version: int
    config: dict
    n_parameters: int
    manifest_entries: int


class HealthResponse(BaseModel):
    status: str
    model_loaded: bool
