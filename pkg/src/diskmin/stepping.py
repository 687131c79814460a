"""Adaptive embedded 5(4) driver with dense output.

The driver is deliberately in-repo: switching detection needs an
interpolant under our control on every accepted step.  It advances a
monotone internal clock s >= 0; callers fold time direction into the
right-hand side and map s back to physical time.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from . import backends
from .errors import StepSizeUnderflow

Array = NDArray[np.float64]

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ERR_EXPONENT = -0.2  # 1/(order of the lower method + 1)


@dataclass(frozen=True)
class Segment:
    """One accepted step with its dense-output stage buffer."""

    s0: float
    h: float
    y0: Array
    K: Array  # (7, n)

    @property
    def s1(self) -> float:
        return self.s0 + self.h

    def eval(self, s: float) -> Array:
        theta = (s - self.s0) / self.h
        return backends.dp54_dense_eval(self.y0, self.h, self.K, theta)


@dataclass
class DensePath:
    """Piecewise quartic interpolant over contiguous accepted steps."""

    segments: list[Segment] = field(default_factory=list)
    _ends: list[float] = field(default_factory=list)

    def append(self, seg: Segment) -> None:
        self.segments.append(seg)
        self._ends.append(seg.s1)

    def extend(self, other: "DensePath") -> None:
        for seg in other.segments:
            self.append(seg)

    @property
    def s_start(self) -> float:
        return self.segments[0].s0

    @property
    def s_end(self) -> float:
        return self._ends[-1]

    def eval(self, s: float) -> Array:
        if not self.segments:
            raise ValueError("empty dense path")
        span = max(abs(self.s_start), abs(self.s_end))
        slack = 1e-9 * (1.0 + span)
        if s < self.s_start - slack or s > self.s_end + slack:
            raise ValueError(f"time {s} outside dense range [{self.s_start}, {self.s_end}]")
        i = bisect.bisect_left(self._ends, s)
        if i >= len(self.segments):
            i = len(self.segments) - 1
        return self.segments[i].eval(s)


def _error_weighted_norm(v: Array, y: Array, rtol: float, atol: float) -> float:
    scale = atol + rtol * np.abs(y)
    return float(np.sqrt(np.mean((v / scale) ** 2)))


def initial_step(f, s0: float, y0: Array, rtol: float, atol: float, span: float) -> float:
    """Hairer's starting-step heuristic for explicit RK of order 5."""
    f0 = np.asarray(f(s0, y0), dtype=float)
    scale = atol + rtol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((y0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2)))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * f0
    f1 = np.asarray(f(s0 + h0, y1), dtype=float)
    d2 = float(np.sqrt(np.mean(((f1 - f0) / scale) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


class Driver:
    """Stateful adaptive stepper: repeated `advance` calls yield accepted
    segments until the caller decides to stop."""

    def __init__(self, f, y0: Array, rtol: float, atol: float,
                 h_floor: float = 1e-14, first_step: float | None = None,
                 span_hint: float = 1.0):
        self.f = f
        self.s = 0.0
        self.y = np.ascontiguousarray(y0, dtype=float)
        self.n = self.y.shape[0]
        self.rtol = rtol
        self.atol = atol
        self.h_floor = h_floor
        self.K = np.empty((7, self.n))
        self.K[0] = np.asarray(f(0.0, self.y), dtype=float)
        self._ybuf = np.empty(self.n)
        self.h_next = first_step if first_step is not None else initial_step(
            f, 0.0, self.y, rtol, atol, span_hint)
        self.nsteps = 0
        self.nrejected = 0

    def advance(self, max_step: float = np.inf) -> Segment:
        """Take one accepted step of size at most ``max_step``."""
        rejected = False
        while True:
            h = min(self.h_next, max_step)
            if h < self.h_floor:
                raise StepSizeUnderflow(self.s, h)
            try:
                err = backends.dp54_try_step(
                    self.f, self.s, self.y, h, self.rtol, self.atol,
                    self.K, self._ybuf)
            except (backends.KernelSingularControl, FloatingPointError, ZeroDivisionError):
                err = np.inf
            if not np.isfinite(err):
                # singular/overflowing stage: treat as a hard rejection
                # (row 0 of K is never written by a trial step, so the FSAL
                # value at (s, y) is still intact)
                self.h_next = 0.25 * h
                self.nrejected += 1
                rejected = True
                continue
            if err <= 1.0:
                seg = Segment(self.s, h, self.y.copy(), self.K.copy())
                factor = MAX_FACTOR if err == 0.0 else min(
                    MAX_FACTOR, max(MIN_FACTOR, SAFETY * err ** ERR_EXPONENT))
                if rejected:
                    factor = min(1.0, factor)
                self.h_next = h * factor
                self.s += h
                self.y = self._ybuf.copy()
                self.K[0] = self.K[6].copy()  # FSAL
                self.nsteps += 1
                return seg
            rejected = True
            self.nrejected += 1
            self.h_next = h * max(MIN_FACTOR, SAFETY * err ** ERR_EXPONENT)


def integrate_fixed(f, y0: Array, s_end: float, rtol: float, atol: float,
                    h_floor: float = 1e-14, max_step: float = np.inf) -> tuple[Array, DensePath]:
    """Integrate y' = f(s, y) from s=0 to s_end (no events), returning the
    endpoint and the dense path."""
    if s_end <= 0.0:
        raise ValueError("s_end must be positive (fold direction into f)")
    drv = Driver(f, y0, rtol, atol, h_floor=h_floor, span_hint=s_end)
    path = DensePath()
    while drv.s < s_end:
        seg = drv.advance(max_step=min(max_step, s_end - drv.s))
        path.append(seg)
    return drv.y.copy(), path
