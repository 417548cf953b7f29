"""FastAPI service exposing the trained orbital predictor.

The service wraps a loaded checkpoint: clients send a geometry and get
back the predicted rotation, a pair energy under chosen orbitals, or a
one-step warm-started optimization.  Endpoints needing a model return
503 when the app was created without a checkpoint.
"""

from __future__ import annotations

import os
import time

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import orbital_opt, spa
from ..chem import Geometry, atomic_integrals, overlap_matrix, to_native_basis
from ..datagen import givens_guess, min_weight_matching
from ..errors import OospaError
from ..model import CHECKPOINT_SCHEMA_VERSION, load_checkpoint
from ..pipeline import energy_with_orbitals, predict_orbitals
from .schemas import (
    EnergyRequest,
    EnergyResponse,
    GeometryPayload,
    HealthResponse,
    ModelInfoResponse,
    PredictRequest,
    PredictResponse,
    WarmStartRequest,
    WarmStartResponse,
)

CHECKPOINT_ENV = "OOSPA_CHECKPOINT"


def _geometry_from_payload(payload: GeometryPayload) -> tuple[Geometry, tuple]:
    coords = np.array(payload.coords, dtype=float)
    elements = tuple(payload.elements) if payload.elements else ("H",) * coords.shape[0]
    try:
        geom = Geometry(coords, elements)
        if payload.edges is not None:
            edges = tuple(tuple(sorted(e)) for e in payload.edges)
            spa.PairStructure.from_matching(edges)
        else:
            if geom.n_atoms % 2 != 0:
                raise HTTPException(
                    status_code=400, detail="matching requires an even atom count"
                )
            edges = min_weight_matching(geom)
    except OospaError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    return geom, edges


def create_app(checkpoint_path: str | None = None) -> FastAPI:
    """Build the service; the checkpoint may also come from $OOSPA_CHECKPOINT."""
    app = FastAPI(title="oospa orbital prediction service", version="0.1.0")
    path = checkpoint_path or os.environ.get(CHECKPOINT_ENV)
    app.state.model = None
    app.state.extra = {}
    if path:
        app.state.model, app.state.extra = load_checkpoint(path)

    def require_model():
        if app.state.model is None:
            raise HTTPException(status_code=503, detail="no checkpoint loaded")
        return app.state.model

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", model_loaded=app.state.model is not None)

    @app.get("/model/info", response_model=ModelInfoResponse)
    def model_info():
        model = require_model()
        manifest = model.manifest()
        return ModelInfoResponse(
            schema_version=CHECKPOINT_SCHEMA_VERSION,
            config=model.cfg.__dict__,
            n_parameters=sum(int(np.prod(shape)) for _, shape in manifest),
            manifest_entries=len(manifest),
        )

    @app.post("/predict", response_model=PredictResponse)
    def predict(request: PredictRequest):
        model = require_model()
        geom, edges = _geometry_from_payload(request)
        try:
            prediction = predict_orbitals(model, geom, edges)
        except OospaError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return PredictResponse(
            n=geom.n_atoms,
            edges=list(prediction.edges),
            a_upper=prediction.a_upper.tolist(),
            m_oo=prediction.m_pred.tolist(),
            elapsed_ms=prediction.elapsed_s * 1e3,
        )

    @app.post("/energy", response_model=EnergyResponse)
    def energy(request: EnergyRequest):
        geom, edges = _geometry_from_payload(request)
        start = time.perf_counter()
        try:
            if request.m_oo is not None:
                mode = "explicit"
                m = np.array(request.m_oo, dtype=float)
                e_spa, theta = energy_with_orbitals(geom, edges, m)
            elif request.mode == "predicted":
                mode = "predicted"
                prediction = predict_orbitals(require_model(), geom, edges)
                e_spa, theta = energy_with_orbitals(geom, edges, prediction.m_pred)
            elif request.mode == "givens":
                mode = "givens"
                m = givens_guess(edges, geom.n_atoms)
                e_spa, theta = energy_with_orbitals(geom, edges, m)
            else:
                mode = "optimized"
                ints = to_native_basis(atomic_integrals(geom), overlap_matrix(geom))
                ps = spa.PairStructure.from_matching(edges)
                result = orbital_opt.optimize_orbitals(
                    ints, ps, givens_guess(edges, geom.n_atoms)
                )
                e_spa, theta = result.e_spa, result.theta_opt
        except OospaError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return EnergyResponse(
            mode=mode,
            e_spa=e_spa,
            e_nn=atomic_integrals(geom).e_nn,
            theta_opt=np.asarray(theta).tolist(),
            edges=list(edges),
            elapsed_ms=(time.perf_counter() - start) * 1e3,
        )

    @app.post("/warm-start", response_model=WarmStartResponse)
    def warm_start(request: WarmStartRequest):
        geom, edges = _geometry_from_payload(request)
        start = time.perf_counter()
        try:
            if request.start == "predicted":
                m_start = predict_orbitals(require_model(), geom, edges).m_pred
            else:
                m_start = givens_guess(edges, geom.n_atoms)
            ints = to_native_basis(atomic_integrals(geom), overlap_matrix(geom))
            ps = spa.PairStructure.from_matching(edges)
            e_start, _ = energy_with_orbitals(geom, edges, m_start)
            result = orbital_opt.warm_start_step(ints, ps, m_start)
        except OospaError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return WarmStartResponse(
            start=request.start,
            e_start=e_start,
            e_warm=result.e_spa,
            edges=list(edges),
            m_oo=result.m_oo.tolist(),
            elapsed_ms=(time.perf_counter() - start) * 1e3,
        )

    return app
