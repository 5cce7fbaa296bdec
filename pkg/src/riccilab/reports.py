"""Pass/fail reports shared by the entropy, reduced-geometry and verifier layers."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Tuple

import numpy as np


@dataclass
class CheckReport:
    """Outcome of an inequality or identity check.

    ``worst_margin`` is signed: negative means the inequality is violated
    by that amount.  The check passes iff ``worst_margin >= -tolerance``.
    """

    name: str
    passed: bool
    worst_margin: float
    worst_location: Tuple[float, int]
    samples_checked: int
    tolerance: float
    applicable: bool = True
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["worst_location"] = [float(self.worst_location[0]), int(self.worst_location[1])]
        d["details"] = self.details
        return jsonable(d)


def jsonable(x):
    """Plain JSON types; NaN and infinities become ``None``."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def make_report(name: str, margins: Iterable[Tuple[float, float, int]], tolerance: float,
                details: Optional[dict] = None) -> CheckReport:
    """Build a report from ``(margin, t, index)`` samples."""
    worst, loc, count = math.inf, (math.nan, -1), 0
    for m, t, i in margins:
        count += 1
        m = float(m)
        if not math.isfinite(m):
            m = -math.inf
        if m < worst:
            worst, loc = m, (float(t), int(i))
    if count == 0:
        return not_applicable(name, "no samples")
    return CheckReport(name, worst >= -tolerance, worst, loc, count, tolerance, True, details or {})


def not_applicable(name: str, reason: str) -> CheckReport:
    return CheckReport(name, True, math.inf, (math.nan, -1), 0, 0.0, False, {"reason": reason})


def array_margins(margin: np.ndarray, t: float):
    """``(margin, t, index)`` triples for every grid cell."""
    for i, m in enumerate(np.asarray(margin).ravel()):
        yield m, t, i
