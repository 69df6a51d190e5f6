"""Piecewise-linear paths in the complex plane with optional infinite tails."""
from __future__ import annotations

from dataclasses import dataclass, field

from gmpy2 import mpc

from ..precision import PrecisionCtx


@dataclass
class ComplexPath:
    """Ordered waypoints; a tail flag means the path conceptually extends to
    complex infinity from waypoints[0] along `tail_dir` (unit vector pointing
    toward infinity).  Integration convention is from the tail / first node
    toward the last node."""

    waypoints: list
    tail_dir: complex | None = None
    domain: str | None = None

    def __post_init__(self):
        pts = [mpc(w) for w in self.waypoints]
        for a, b in zip(pts[:-1], pts[1:]):
            if a == b:
                raise ValueError("consecutive path nodes must be distinct")
        self.waypoints = pts
        if self.tail_dir is not None:
            d = mpc(self.tail_dir)
            if abs(d) == 0:
                raise ValueError("tail direction must be a nonzero vector")
            self.tail_dir = d / abs(d)

    @property
    def has_tail(self) -> bool:
        return self.tail_dir is not None

    def check_domain(self, predicate) -> bool:
        return all(predicate(w) for w in self.waypoints)
