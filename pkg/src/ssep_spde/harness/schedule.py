"""Scaling schedules ``eps -> (eta, K, M)`` and their regime diagnostics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ValidationError
from ..mollifier import sup_deriv
from ..noise import correction_constant


@dataclass(frozen=True)
class ScheduleEntry:
    epsilon: float
    eta: float
    K: int
    M: int | None
    eps_K: float
    eps_N_deriv2: float
    eps_N2_deriv4: float


@dataclass
class ScheduleReport:
    d: int
    entries: list[ScheduleEntry]
    ldp: bool
    clt: bool

    def rows(self) -> list[dict]:
        return [asdict(e) for e in self.entries]


def _strictly_decreasing(v) -> bool:
    return bool(np.all(np.diff(np.asarray(v, float)) < 0))


def diagnostics(epsilon: float, eta: float, K: int, d: int) -> tuple[float, float, float]:
    """``(eps K^{d+2}, eps N_K sup|s'|^2, eps N_K^2 sup|s'|^4)`` with the measured ``sup|s'|``."""
    n_k = correction_constant(d, K)
    sd = sup_deriv(float(eta))
    return epsilon * K ** (d + 2), epsilon * n_k * sd**2, epsilon * n_k**2 * sd**4


def report_for(entries, d: int, M: int | None = None) -> ScheduleReport:
    """Diagnostics and regime flags for explicit ``(eps, eta, K)`` entries."""
    out = []
    for e in entries:
        eps, eta, K = float(e["epsilon"]), float(e["eta"]), int(e["K"])
        if not 0.0 <= eps <= 1.0 or not 0.0 < eta < 1.0 or K < 1:
            raise ValidationError(f"invalid schedule entry {e}")
        out.append(ScheduleEntry(eps, eta, K, e.get("M", M), *diagnostics(eps, eta, K, d)))
    if not out:
        raise ValidationError("empty schedule")
    ldp = _strictly_decreasing([e.eps_K for e in out]) and _strictly_decreasing([e.eps_N_deriv2 for e in out])
    clt = _strictly_decreasing([e.eps_N2_deriv4 for e in out])
    return ScheduleReport(d, out, ldp, clt)


def build_schedule(epsilons, a: float, b: float, d: int, n: int | None = None) -> ScheduleReport:
    """``K = ceil(eps^-a)``, ``eta = eps^b`` and ``M`` the grid limit ``n/2 - 1`` (if ``n`` is given)."""
    eps = [float(e) for e in epsilons]
    if not eps:
        raise ValidationError("empty epsilon list")
    if a <= 0 or b <= 0:
        raise ValidationError("exponents a and b must be positive")
    if any(not 0.0 < e < 1.0 for e in eps):
        raise ValidationError("epsilons must lie in (0, 1)")
    if not _strictly_decreasing(eps):
        raise ValidationError("epsilons must be strictly decreasing")
    M = n // 2 - 1 if n is not None else None
    entries = [{"epsilon": e, "eta": e**b, "K": math.ceil(e ** (-a) - 1e-12)} for e in eps]
    return report_for(entries, d, M)
