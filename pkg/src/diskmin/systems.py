"""Control-affine systems on R^4 with two controlled directions.

A system is  xdot = F0(x) + u1*F1(x) + u2*F2(x)  with the control constrained
to the closed unit disk |u| <= 1.  Systems carry evaluators for the three
fields and their state Jacobians; everything downstream (Hamiltonian lifts,
bracket tests, extremal flows) is built on these callables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import AssumptionViolated, ConfigError, EvaluationError
from .tolerances import DEFAULT_TOL, Tolerances

Array = NDArray[np.float64]
FieldFn = Callable[[Array], Array]
JacFn = Callable[[Array], Array]

DIM = 4  # state dimension of the supported class


def _as_state(x) -> Array:
    x = np.asarray(x, dtype=float)
    if x.shape != (DIM,):
        raise ConfigError(f"state must have shape ({DIM},), got {x.shape}")
    return x


@dataclass(frozen=True)
class AffineSystem:
    """Evaluator bundle for one control-affine system.

    ``kernel_id`` names a compiled fast path for the extremal vector field
    (see :mod:`diskmin.backends`); systems without one use the generic
    callback route.
    """

    name: str
    f0: FieldFn
    f1: FieldFn
    f2: FieldFn
    jf0: JacFn
    jf1: JacFn
    jf2: JacFn
    kernel_id: str | None = None
    dim: int = field(default=DIM)
    # fields are affine in x: all Jacobians constant, second derivatives zero
    jac_constant: bool = False

    def fields(self, x: Array) -> tuple[Array, Array, Array]:
        return self.eval_field(0, x), self.eval_field(1, x), self.eval_field(2, x)

    def _check_x(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,) or not np.all(np.isfinite(x)):
            raise EvaluationError(f"'{self.name}' expects a finite {self.dim}-vector, got {x!r}")
        return x

    def eval_field(self, i: int, x: Array) -> Array:
        x = self._check_x(x)
        fn = (self.f0, self.f1, self.f2)[i]
        out = np.asarray(fn(x), dtype=float)
        if out.shape != (self.dim,) or not np.all(np.isfinite(out)):
            raise EvaluationError(f"field F{i} of '{self.name}' returned {out!r} at x={x!r}")
        return out

    def eval_jac(self, i: int, x: Array) -> Array:
        x = self._check_x(x)
        fn = (self.jf0, self.jf1, self.jf2)[i]
        out = np.asarray(fn(x), dtype=float)
        if out.shape != (self.dim, self.dim) or not np.all(np.isfinite(out)):
            raise EvaluationError(f"Jacobian JF{i} of '{self.name}' returned {out!r} at x={x!r}")
        return out


def dynamics_rhs(sys: AffineSystem, x: Array, u: Sequence[float]) -> Array:
    """State velocity for a given admissible control value."""
    x = _as_state(x)
    u = np.asarray(u, dtype=float)
    if u.shape != (2,):
        raise ConfigError("control must be a 2-vector")
    if np.hypot(u[0], u[1]) > 1.0 + 1e-9:
        raise ConfigError(f"control outside the unit disk: |u| = {np.hypot(u[0], u[1]):.6f}")
    return sys.eval_field(0, x) + u[0] * sys.eval_field(1, x) + u[1] * sys.eval_field(2, x)


def lie_bracket(sys: AffineSystem, i: int, j: int, x: Array) -> Array:
    """[Fi, Fj](x) with the convention  JFj(x)·Fi(x) - JFi(x)·Fj(x)."""
    x = _as_state(x)
    fi = sys.eval_field(i, x)
    fj = sys.eval_field(j, x)
    return sys.eval_jac(j, x) @ fi - sys.eval_jac(i, x) @ fj


def bracket_frame(sys: AffineSystem, x: Array) -> Array:
    """Columns (F1, F2, [F0,F1], [F0,F2]) at x, the frame behind the
    pointwise independence assumption."""
    x = _as_state(x)
    cols = [
        sys.eval_field(1, x),
        sys.eval_field(2, x),
        lie_bracket(sys, 0, 1, x),
        lie_bracket(sys, 0, 2, x),
    ]
    return np.stack(cols, axis=1)


def check_a1(
    sys: AffineSystem,
    x: Array,
    tol: Tolerances = DEFAULT_TOL,
    raise_on_violation: bool = True,
) -> float:
    """det(F1, F2, [F0,F1], [F0,F2]) at x.

    The determinant being bounded away from zero is the pointwise
    independence assumption; it is checked along trajectories (at sample
    points), not globally.
    """
    det = float(np.linalg.det(bracket_frame(sys, x)))
    if raise_on_violation and abs(det) <= tol.tol_a1:
        raise AssumptionViolated("A1", f"|det| = {abs(det):.3e} <= {tol.tol_a1:.1e} at x={x!r}")
    return det


def validate_jacobians(
    sys: AffineSystem,
    points: Sequence[Array],
    rel_tol: float = 1e-5,
    fd_step: float = 1e-6,
) -> float:
    """Cross-check supplied Jacobians against central differences.

    Returns the worst relative mismatch over the sample points; raises
    EvaluationError beyond ``rel_tol``.
    """
    worst = 0.0
    for x in points:
        x = _as_state(x)
        scale = fd_step * (1.0 + float(np.linalg.norm(x)))
        for i in range(3):
            jac = sys.eval_jac(i, x)
            fd = np.empty_like(jac)
            for k in range(sys.dim):
                e = np.zeros(sys.dim)
                e[k] = scale
                fd[:, k] = (sys.eval_field(i, x + e) - sys.eval_field(i, x - e)) / (2 * scale)
            err = np.max(np.abs(fd - jac)) / (1.0 + np.max(np.abs(jac)))
            worst = max(worst, float(err))
            if err > rel_tol:
                raise EvaluationError(
                    f"Jacobian JF{i} of '{sys.name}' disagrees with finite differences "
                    f"(rel err {err:.2e}) at x={x!r}"
                )
    return worst


# ---------------------------------------------------------------------------
# built-in systems and the registry
# ---------------------------------------------------------------------------

def _kepler_f0(x: Array) -> Array:
    return np.array([1.0 + x[2], x[3], 0.0, 0.0])


_KEPLER_JF0 = np.array(
    [
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ]
)
_E3 = np.array([0.0, 0.0, 1.0, 0.0])
_E4 = np.array([0.0, 0.0, 0.0, 1.0])
_ZERO4x4 = np.zeros((4, 4))


def make_nilpotent_kepler() -> AffineSystem:
    """Nilpotent double-integrator model: drift (1 + x3, x4, 0, 0) with the
    controls acting directly on (x3, x4).  Its adjoint flow is affine in t,
    which gives closed forms used throughout the tests."""
    return AffineSystem(
        name="nilpotent-kepler",
        f0=_kepler_f0,
        f1=lambda x: _E3.copy(),
        f2=lambda x: _E4.copy(),
        jf0=lambda x: _KEPLER_JF0.copy(),
        jf1=lambda x: _ZERO4x4.copy(),
        jf2=lambda x: _ZERO4x4.copy(),
        kernel_id="nilpotent-kepler",
        jac_constant=True,
    )


_REGISTRY: dict[str, Callable[[], AffineSystem]] = {
    "nilpotent-kepler": make_nilpotent_kepler,
}


def register_system(name: str, factory: Callable[[], AffineSystem]) -> None:
    if name in _REGISTRY:
        raise ConfigError(f"system '{name}' is already registered")
    _REGISTRY[name] = factory


def get_system(name: str) -> AffineSystem:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(_REGISTRY))
        raise ConfigError(f"unknown system '{name}' (known: {known})") from None
    return factory()


def list_systems() -> list[str]:
    return sorted(_REGISTRY)
