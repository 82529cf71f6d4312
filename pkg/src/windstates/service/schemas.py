"""Request and response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class RunRequest(BaseModel):
    """One pipeline command invocation.

    ``config`` is a server-side path to a flat key=value file; ``overrides``
    are applied on top of it, then ``seed`` and ``out`` on top of those.
    """

    config: str | None = None
    seed: int | None = None
    out: str | None = None
    overrides: dict[str, str] = Field(default_factory=dict)


class RunResponse(BaseModel):
    ok: bool = True
    summary: dict


class StateRequest(BaseModel):
    """Wind speeds (units of v_nom_reference) to classify.

    The boundary model comes either inline (``boundaries``) or from the
    artifacts of a previous run (``out``).
    """

    wind_speeds: list[float]
    boundaries: dict | None = None
    out: str | None = None


class StateAssignment(BaseModel):
    wind_speed: float
    regime: str
    state: int


class StateResponse(BaseModel):
    method: str
    assignments: list[StateAssignment]


class HealthResponse(BaseModel):
    status: str
    version: str
