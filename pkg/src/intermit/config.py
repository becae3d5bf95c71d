"""Run configuration, validated before any computation starts."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .corpus import CORPUS
from .defaults import DEFAULTS, TOLERANCES


class RunConfig(BaseModel):
    """Everything that determines the output of one analysis run.

    Exactly one of ``input`` (a VF1 file) and ``synth`` (a corpus name) is
    given.  ``window`` is the shell fit window ``(lo, hi)``; None selects the
    default for the grid.  ``K_list`` None means every truncation
    ``1 <= K < q``.  ``cells`` None selects the default regularity-cell grid.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    input: str | None = None
    synth: str | None = None
    n: int | None = Field(default=None, ge=8)
    synth_params: dict = Field(default_factory=dict)
    window: tuple[int, int] | None = None
    sigma: Literal["harmonic", "log", "constant"] = DEFAULTS["sigma_schedule"]
    sigma_scale: float = Field(default=1.0, gt=0)
    M: Literal[1, 2] = DEFAULTS["atom_order_M"]
    K_list: list[int] | None = None
    p_list: list[float] = Field(default_factory=lambda: list(DEFAULTS["multifractal_orders"]))
    n_theta: int = Field(default=DEFAULTS["n_theta"], ge=TOLERANCES["min_directions"])
    separations: int = Field(default=DEFAULTS["separations"], ge=2)
    theta: float = Field(default=TOLERANCES["singular_threshold_theta"], gt=0)
    cells: tuple[int, int, int] | None = None
    index_set: Literal["complete", "paper"] = DEFAULTS["flux_index_set"]
    dealias: bool = False
    oversample: int = Field(default=DEFAULTS["moment_oversample"], ge=1, le=4)
    sof_delta: float = Field(default=DEFAULTS["sof_delta"], gt=0, lt=1)
    out: str = "report"

    @field_validator("synth")
    @classmethod
    def _known_field(cls, v):
        if v is not None and v not in CORPUS:
            raise ValueError(f"unknown corpus field {v!r}; choose from {sorted(CORPUS)}")
        return v

    @field_validator("window")
    @classmethod
    def _window(cls, v):
        if v is not None and not (0 <= v[0] < v[1]):
            raise ValueError("window must satisfy 0 <= lo < hi")
        return v

    @field_validator("K_list")
    @classmethod
    def _ks(cls, v):
        if v is not None and any(k < 1 for k in v):
            raise ValueError("truncations K must be >= 1")
        return None if v is None else sorted(set(v))

    @field_validator("p_list")
    @classmethod
    def _ps(cls, v):
        if not v or any(p < 3 for p in v):
            raise ValueError("multifractal orders must be >= 3")
        return sorted(set(float(p) if not float(p).is_integer() else int(p) for p in v))

    @field_validator("cells")
    @classmethod
    def _cells(cls, v):
        if v is not None and any(c < 1 for c in v):
            raise ValueError("cell counts must be positive")
        return v

    @model_validator(mode="after")
    def _source(self):
        if (self.input is None) == (self.synth is None):
            raise ValueError("give exactly one of input and synth")
        return self

    def echo(self) -> dict:
        """JSON-ready copy of the configuration as embedded in reports."""
        return self.model_dump(mode="json")


def parse_window(text: str) -> tuple[int, int]:
    """``"3:8"`` -> ``(3, 8)``."""
    try:
        lo, hi = text.split(":")
        return int(lo), int(hi)
    except ValueError as exc:
        raise ValueError(f"window must look like LO:HI, got {text!r}") from exc
