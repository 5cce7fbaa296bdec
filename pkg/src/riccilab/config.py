"""Scenario configuration: a TOML document validated strictly.

Grammar (all keys optional unless marked)::

    [[scenario]]
    id = "sphere3"              # required, unique in the batch
    family = "sphere"           # required, see FAMILIES
    params = { n = 3, r = 1.0 }
    N = 256
    t_end = 0.3                 # required except for static families
    seed = 0
    normalized = false
    dt = { dt_max = 0.01, c_cfl = 0.2, dt_min = 1e-14 }
    ceilings = { curvature = 1e6 }
    outputs = { cadence = 0.01 }
    entropy = { tau = 0.5, potential = "constant", quantities = ["F", "W"] }
    reduced = { tau_list = [0.5, 1.0], M = 256, identities = true }
    checks = [ { name = "extinction_time", expected = 0.25, tolerance = 0.0025 } ]

Unknown keys anywhere are rejected with the offending line.
"""
from __future__ import annotations

import re
import sys
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .errors import RangeError, SchemaError

FAMILIES = {
    "sphere": {"n": 3, "r": 1.0},
    "perturbed_surface": {"amp": 0.1, "mode": 2},
    "dumbbell": {"neck": 0.3, "neck_half_width": 0.5, "stretch": 3.0, "dip": 0.05, "edge": 0.1,
                 "normalize_pinching": False},
    "cigar": {"X": 3.0},
    "flat_disk": {"radius": 10.0},
    "flat_torus": {"side": 6.283185307179586},
    "torus_surface": {"amp": 0.3, "side": 6.283185307179586, "normalize_R": True},
    "homogeneous": {"brackets": [0.0, 0.0, 0.0], "A": 1.0, "B": 1.0, "C": 1.0},
    "curvode": {"alpha": [2.0, 2.0, 2.0]},
    "gaussian": {"n": 2, "half_width": 8.0},
}
STATIC_FAMILIES = {"gaussian"}

CHECKS = {
    # flow checkers
    "scalar_barrier", "hamilton_ivey", "surface_harnack", "trace_harnack", "invariant_cone",
    "distance_derivative", "neck",
    # value checks on produced columns
    "extinction_time", "expect", "upper_bound", "monotone", "status",
}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DtPolicy(_Strict):
    dt_max: float = Field(1e-2, gt=0)
    c_cfl: float = Field(0.2, gt=0, le=0.5)
    dt_min: float = Field(1e-14, gt=0)


class Ceilings(_Strict):
    curvature: float = Field(1e6, gt=0)


class Outputs(_Strict):
    cadence: Optional[float] = Field(None, gt=0)


class EntropySpec(_Strict):
    tau: float = Field(..., gt=0)
    potential: Literal["constant", "gaussian"] = "constant"
    quantities: List[Literal["F", "W", "lambda", "mu"]] = ["F", "W"]
    tau_list: Optional[List[float]] = None


class ReducedSpec(_Strict):
    tau_list: List[float]
    M: int = Field(256, ge=8)
    t0: Optional[float] = None
    identities: bool = False

    @field_validator("tau_list")
    @classmethod
    def _positive(cls, v):
        if not v or any(t <= 0 for t in v):
            raise ValueError("tau_list must be non-empty and positive")
        return v


class CheckSpec(_Strict):
    name: str
    tolerance: float = Field(1e-6, ge=0)
    quantity: Optional[str] = None
    expected: Optional[float] = None
    upper: Optional[float] = None
    direction: Optional[Literal["nonincreasing", "nondecreasing"]] = None
    epsilon: Optional[float] = Field(None, gt=0)
    nodes: Optional[List[int]] = None
    relative: bool = False
    status: Optional[List[str]] = None

    @field_validator("name")
    @classmethod
    def _known(cls, v):
        if v not in CHECKS:
            raise ValueError(f"unknown check '{v}' (known: {', '.join(sorted(CHECKS))})")
        return v


class Scenario(_Strict):
    id: str = Field(..., min_length=1)
    family: str
    params: Dict[str, object] = Field(default_factory=dict)
    N: int = Field(256, gt=4)
    t_end: Optional[float] = Field(None, ge=0)
    seed: int = 0
    normalized: bool = False
    dt: DtPolicy = Field(default_factory=DtPolicy)
    ceilings: Ceilings = Field(default_factory=Ceilings)
    outputs: Outputs = Field(default_factory=Outputs)
    entropy: Optional[EntropySpec] = None
    reduced: Optional[ReducedSpec] = None
    checks: List[CheckSpec] = Field(default_factory=list)

    @field_validator("id")
    @classmethod
    def _id_chars(cls, v):
        if not re.fullmatch(r"[A-Za-z0-9_.\-]+", v):
            raise ValueError("id may only contain letters, digits, '_', '.', '-'")
        return v

    @field_validator("family")
    @classmethod
    def _family(cls, v):
        if v not in FAMILIES:
            raise ValueError(f"unknown family '{v}' (known: {', '.join(sorted(FAMILIES))})")
        return v

    @model_validator(mode="after")
    def _params(self):
        allowed = FAMILIES[self.family]
        extra = set(self.params) - set(allowed)
        if extra:
            raise ValueError(f"unknown params for {self.family}: {', '.join(sorted(extra))}")
        merged = dict(allowed)
        merged.update(self.params)
        self.params = merged
        if self.family not in STATIC_FAMILIES and self.t_end is None:
            raise ValueError("t_end is required")
        return self


class Batch(_Strict):
    scenario: List[Scenario]


def _line_of(text: str, index: int, key: Optional[str]) -> Optional[int]:
    """Best-effort line number of ``key`` inside the ``index``-th scenario block."""
    lines = text.splitlines()
    starts = [i for i, l in enumerate(lines) if l.strip().startswith("[[scenario]]")]
    if not starts:
        return None
    lo = starts[index] if index < len(starts) else starts[-1]
    hi = starts[index + 1] if index + 1 < len(starts) else len(lines)
    if key is not None:
        pat = re.compile(rf"(^|[\s{{,\[]){re.escape(key)}\s*=")
        for i in range(lo, hi):
            if pat.search(lines[i]) or lines[i].strip() in (f"[scenario.{key}]", f"[[scenario.{key}]]"):
                return i + 1
    return lo + 1


def parse_config(text: str) -> List[Scenario]:
    """Parse and validate a batch; raises SchemaError (with line/field) or RangeError."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        m = re.search(r"line (\d+)", str(e))
        raise SchemaError(f"malformed TOML: {e}", line=int(m.group(1)) if m else None) from None
    if set(doc) - {"scenario"}:
        key = sorted(set(doc) - {"scenario"})[0]
        line = next((i + 1 for i, l in enumerate(text.splitlines()) if re.match(rf"\s*\[?{re.escape(key)}\b", l)), None)
        raise SchemaError("unknown top-level key", line=line, field=key)
    if not isinstance(doc.get("scenario"), list) or not doc["scenario"]:
        raise SchemaError("expected at least one [[scenario]] table", field="scenario")
    try:
        batch = Batch.model_validate(doc)
    except ValidationError as e:
        err = e.errors()[0]
        loc = [p for p in err["loc"]]
        idx = loc[1] if len(loc) > 1 and isinstance(loc[1], int) else 0
        names = [p for p in loc[2:] if isinstance(p, str)]
        fieldname = ".".join(str(p) for p in loc[2:]) or "scenario"
        key = names[-1] if names else None
        if key is None or key == "params":
            raw = doc["scenario"][idx] if idx < len(doc["scenario"]) else {}
            key = "params" if "params" in raw and "params" in err.get("msg", "") else key
        cls = RangeError if err["type"] in ("greater_than", "greater_than_equal", "less_than_equal", "less_than") \
            else SchemaError
        raise cls(err["msg"], line=_line_of(text, idx, key), field=fieldname) from None
    seen = {}
    for i, sc in enumerate(batch.scenario):
        if sc.id in seen:
            raise SchemaError(f"duplicate scenario id '{sc.id}'", line=_line_of(text, i, "id"), field="id")
        seen[sc.id] = i
    return batch.scenario
