"""Error taxonomy for the toolkit.

Every failure mode that callers are expected to react to gets its own class;
the CLI maps them onto exit codes (config -> 1, numerics -> 2, violated
structural assumptions -> 3).
"""

from __future__ import annotations


class DiskminError(Exception):
    """Base class for all package errors."""


class ConfigError(DiskminError):
    """Bad user input: unknown system, malformed vector, bad config file."""


class EvaluationError(DiskminError):
    """A field or Jacobian evaluator failed or returned non-finite values."""


class SingularControl(DiskminError):
    """The disk-optimal control is requested at a point with rho below
    tolerance, where (H1, H2)/rho is undefined."""

    def __init__(self, rho: float, tol: float, msg: str = ""):
        self.rho = rho
        self.tol = tol
        super().__init__(msg or f"control undefined: rho={rho:.3e} < tol={tol:.3e}")


class SigmaPlusEncounter(DiskminError):
    """Switching-surface contact where h12^2 >= h01^2 + h02^2: the one-sided
    control limits do not exist and the extremal leaves the supported class."""

    def __init__(self, a: float, b: float, c: float, msg: str = ""):
        self.brackets = (a, b, c)
        super().__init__(
            msg
            or "contact outside the transversal stratum: "
            f"h01^2+h02^2-h12^2 = {a * a + b * b - c * c:.3e} <= 0"
        )


class NonTransversalCrossing(DiskminError):
    """Switch with vanishing drift of the switching functions: the jump of
    the variational flow is not determined."""


class StepSizeUnderflow(DiskminError):
    """The adaptive integrator stalled (step below the floor), typically on a
    grazing pass of the switching surface."""

    def __init__(self, t: float, h: float, rho_min: float | None = None):
        self.t = t
        self.h = h
        self.rho_min = rho_min
        extra = "" if rho_min is None else f", min rho so far {rho_min:.3e}"
        super().__init__(f"step size underflow at t={t:.12g} (h={h:.3e}{extra})")


class NewtonDivergence(DiskminError):
    """A Newton iteration exhausted its budget without meeting tolerance."""

    def __init__(self, iterations: int, residual: float, msg: str = ""):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            msg or f"Newton failed after {iterations} iterations "
            f"(residual {residual:.3e})"
        )


class SingularJacobian(DiskminError):
    """Shooting Jacobian numerically singular (condition number overflow)."""


class AssumptionViolated(DiskminError):
    """A structural assumption required by the optimality tests fails.

    ``which`` is "A1" (pointwise independence of the controlled fields and
    their drift brackets) or "A2" (transversality of the initial fiber to the
    switching-surface stable set).
    """

    def __init__(self, which: str, detail: str = ""):
        self.which = which
        super().__init__(f"assumption {which} violated" + (f": {detail}" if detail else ""))
