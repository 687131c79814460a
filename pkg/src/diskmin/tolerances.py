"""Central tolerance policy.

All thresholds that the algorithms depend on live here, so a run is fully
reproducible from one record.  Adjoint-scaled quantities (anything compared
against rho = |(H1, H2)|) use a relative factor times ``1 + |p|``.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, replace


@dataclass(frozen=True)
class Tolerances:
    # integration
    tol_int: float = 1e-10          # local error per step (abs and rel)
    h_floor_rel: float = 1e-14      # step floor, scaled by 1 + |t|
    restart_len_rel: float = 1e-6   # post-switch frozen-control micro-step, * (1 + t_bar)

    # switching detection
    rho_arm_rel: float = 1e-3       # arm the contact monitor below this * (1+|p|)
    tol_switch_rho_rel: float = 1e-8  # accept a contact as a switch below this * (1+|p|)
    t_loc_rel: float = 1e-12        # switch-time localization, * (1 + t_bar)

    # pointwise classification
    tol_rho_rel: float = 1e-9       # rho floor for the maximizing control, * (1+|p|)
    tol_sigma_class: float = 1e-9   # dead zone of the contact classification quadratic
    tol_transversal_rel: float = 1e-8  # minimum drift of (H1,H2) at a switch, * (1+|p|)

    # structural assumptions
    tol_a1: float = 1e-10           # |det(F1,F2,[F0,F1],[F0,F2])| floor

    # variational machinery
    fd_step_rel: float = 1e-6       # finite-difference step, * (1 + |z|)

    # boundary-value solving
    tol_shoot_rel: float = 1e-9     # endpoint residual, * (1 + |x_f|)
    tol_level: float = 1e-9         # |h^max| at the solution covector
    newton_max_iter: int = 50
    shoot_max_halvings: int = 30

    # profiles
    eps_t0_rel: float = 1e-3        # left endpoint of det-profile grids, * t_f

    # -- scaled accessors ------------------------------------------------
    def tol_rho(self, pnorm: float) -> float:
        return self.tol_rho_rel * (1.0 + pnorm)

    def rho_arm(self, pnorm: float) -> float:
        return self.rho_arm_rel * (1.0 + pnorm)

    def tol_switch_rho(self, pnorm: float) -> float:
        return self.tol_switch_rho_rel * (1.0 + pnorm)

    def tol_transversal(self, pnorm: float) -> float:
        return self.tol_transversal_rel * (1.0 + pnorm)

    def h_floor(self, t: float) -> float:
        return self.h_floor_rel * (1.0 + abs(t))

    def fd_step(self, znorm: float) -> float:
        return self.fd_step_rel * (1.0 + znorm)

    def asdict(self) -> dict:
        return asdict(self)

    def with_overrides(self, **kw) -> "Tolerances":
        return replace(self, **kw)


DEFAULT_TOL = Tolerances()
