"""Finite-difference (Taylor) tests for one-sided derivatives."""

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DilagradError, InvalidArgumentError
from .levelset import FROM_ABOVE, FROM_BELOW, _check_side, t_max_estimate

ORDER_THRESHOLD = 0.9
EXACT = "exact"
_EPS = np.finfo(float).eps


class ObjectiveError(DilagradError):
    """The objective failed at one ladder point."""

    def __init__(self, t, cause):
        super().__init__(f"objective evaluation failed at t = {t!r}: {cause}")
        self.t = t
        self.cause = cause


@dataclass
class FDReport:
    """Difference quotients of an objective against a claimed derivative.

    ``fitted_order`` is the least-squares slope of ``log(error)`` against
    ``log(t)`` over the points whose error is above the round-off floor,
    or the string ``"exact"`` when fewer than two points qualify.
    ``extrapolated`` is the Richardson estimate of the limit from the two
    smallest steps.
    """

    t_values: np.ndarray
    quotients: np.ndarray
    reference_value: float
    errors: np.ndarray
    fitted_order: object
    side: str
    j0: float
    floor: float
    extrapolated: float

    @property
    def exact(self):
        return self.fitted_order == EXACT

    def passed(self, threshold=ORDER_THRESHOLD):
        if not np.all(np.isfinite(self.errors)):
            return False
        if self.exact:
            return True
        return self.fitted_order >= threshold

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "quotient", "reference", "error"])
        for t, q, e in zip(self.t_values, self.quotients, self.errors):
            w.writerow([repr(float(t)), repr(float(q)), repr(float(self.reference_value)),
                        repr(float(e))])
        order = self.fitted_order if self.exact else repr(float(self.fitted_order))
        w.writerow(["fitted_order", order])
        return buf.getvalue()


def default_ladder(t_max, kmin=3, kmax=8):
    """Geometric ladder ``t_max * 2**-k`` for ``k = kmin..kmax``."""
    if not np.isfinite(t_max) or t_max <= 0:
        raise InvalidArgumentError(f"t_max must be positive and finite, got {t_max}")
    return t_max * 2.0 ** -np.arange(kmin, kmax + 1)


def step_scale(levelset, hat):
    """Finite upper step for ladders around ``phi + t w``.

    The admissible bound when it is finite; otherwise (the perturbation
    node is a zero of the level set) half the smallest nonzero nodal
    magnitude in the support of ``w``.
    """
    tmax = t_max_estimate(levelset, hat)
    if np.isfinite(tmax):
        return tmax
    nodes = np.unique(levelset.mesh.cells[hat.support_cells()])
    vals = np.abs(levelset.nodal_values[nodes])
    vals = vals[vals > 0]
    return 0.5 * float(vals.min()) if vals.size else float(levelset.mesh.diameters.max())


def fitted_slope(t, err, floor):
    mask = err > floor
    if mask.sum() < 2:
        return EXACT
    x, y = np.log(t[mask]), np.log(err[mask])
    return float(np.polyfit(x, y, 1)[0])


def fd_semiderivative(objective, reference_value, t_ladder, side=FROM_ABOVE, j0=None):
    """Difference quotients ``(J(s t) - J(0)) / (s t)`` with ``s`` the side sign.

    Parameters
    ----------
    objective : callable
        ``t -> J(t)``; called with negative arguments for ``from_below``.
    reference_value : float
        Claimed one-sided derivative.
    t_ladder : array_like
        Strictly decreasing positive steps.
    """
    _check_side(side)
    t = np.asarray(t_ladder, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(t <= 0) or np.any(np.diff(t) >= 0):
        raise InvalidArgumentError("t ladder must be strictly decreasing and positive")
    sgn = 1.0 if side == FROM_ABOVE else -1.0
    j0 = float(objective(0.0)) if j0 is None else float(j0)
    q = np.empty(t.size)
    for i, ti in enumerate(t):
        try:
            jt = float(objective(sgn * ti))
        except DilagradError as exc:
            raise ObjectiveError(sgn * ti, exc) from exc
        q[i] = (jt - j0) / (sgn * ti)
    err = np.abs(q - reference_value)
    floor = 1e3 * _EPS * max(abs(j0), abs(reference_value), np.finfo(float).tiny)
    order = fitted_slope(t, err, floor)
    extrap = float(2 * q[-1] - q[-2]) if t.size >= 2 else float(q[-1])
    return FDReport(t, q, float(reference_value), err, order, side, j0, floor, extrap)


@dataclass
class TwoSidedResult:
    above: FDReport
    below: FDReport
    agreement: bool


def two_sided_check(objective, references, t_ladder, rtol=1e-8):
    """Taylor tests on both sides of ``t = 0``.

    ``objective`` is either one callable defined for both signs of ``t`` or
    a pair ``(J_above, J_below)``; ``references`` is a scalar or a pair of
    one-sided claims.  The sides agree when both reports pass and the two
    certified references coincide to ``rtol`` relative.
    """
    if callable(objective):
        up = down = objective
    else:
        up, down = objective
    if np.isscalar(references):
        ref_up = ref_down = float(references)
    else:
        ref_up, ref_down = (float(r) for r in references)
    a = fd_semiderivative(up, ref_up, t_ladder, FROM_ABOVE)
    b = fd_semiderivative(down, ref_down, t_ladder, FROM_BELOW)
    scale = max(abs(ref_up), abs(ref_down))
    agree = a.passed() and b.passed() and abs(ref_up - ref_down) <= rtol * scale
    return TwoSidedResult(a, b, bool(agree))
