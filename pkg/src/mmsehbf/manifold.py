"""Riemannian gradient descent on the product of complex circles.

Points are matrices with unit-modulus entries. The Euclidean gradient of a
real function of a complex matrix ``X`` (in the real inner product
``<U, V> = Re tr(U^H V)``) is ``2 * df/dX*``; it is projected onto the
tangent space, a descent step is taken with Armijo backtracking, and the
result is retracted by entrywise normalization.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .mmse import ReducedObjective

RETRACT_GUARD = 1e-14


@dataclass(frozen=True)
class LineSearchParams:
    initial_step: float = 1.0
    contraction: float = 0.5
    sufficient_decrease: float = 1e-4
    max_backtracks: int = 50

    def __post_init__(self):
        if not self.initial_step > 0:
            raise ValueError("initial_step must be positive")
        if not 0 < self.contraction < 1:
            raise ValueError("contraction must lie in (0, 1)")
        if not 0 < self.sufficient_decrease < 1:
            raise ValueError("sufficient_decrease must lie in (0, 1)")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be positive")


@dataclass(frozen=True)
class MOOptions:
    rel_tol: float = 1e-5
    grad_tol: float = 1e-8
    max_iters: int = 500
    line_search: LineSearchParams = field(default_factory=LineSearchParams)


@dataclass
class MOResult:
    point: np.ndarray
    value: float
    iterations: int
    grad_norm: float
    stalled: bool = False
    # rows (iter, value, grad norm before the step, accepted step); row 0 is the start
    history: list = field(default_factory=list)


def euclidean_grad(v_rf, h1, noise_var, w_scale, lam=None):
    """Conjugate gradient ``dJ/dV_RF*`` of the reduced precoder objective."""
    return ReducedObjective.precoder(h1, noise_var, w_scale, lam).grad(v_rf)


def project_tangent(point, ambient_grad):
    """Remove the radial component of each entry: ``g - Re(g * conj(x)) * x``."""
    return ambient_grad - np.real(ambient_grad * np.conj(point)) * point


def retract(point, step):
    """Entrywise ``(x + d) / |x + d|``; near-zero sums and zero steps keep the old entry."""
    y = point + step
    mag = np.abs(y)
    keep = (mag < RETRACT_GUARD) | (step == 0)
    return np.where(keep, point, y / np.where(keep, 1.0, mag))


def random_point(rng, shape):
    return np.exp(1j * rng.uniform(0.0, 2 * np.pi, shape))


def mo_solve(objective, start, opts=None):
    """Minimize ``objective`` over unit-modulus matrices from ``start``.

    ``objective`` needs a ``value_and_grad(x)`` method returning the value
    and the conjugate gradient ``df/dx*``, plus ``value(x)``.

    Iteration stops when the relative decrease of an accepted step drops
    below ``rel_tol``, the Riemannian gradient norm drops below
    ``grad_tol``, or ``max_iters`` is reached. When backtracking cannot find
    an Armijo step the current point is returned with ``stalled=True``.
    """
    opts = opts or MOOptions()
    ls = opts.line_search
    x = np.array(start, dtype=complex, copy=True)
    f, cgrad = objective.value_and_grad(x)
    history = [(0, float(f), float("nan"), 0.0)]
    step_guess = ls.initial_step
    stalled = False
    it = 0
    gnorm = np.inf
    while True:
        rgrad = project_tangent(x, 2.0 * cgrad)
        gnorm2 = float(np.real(np.vdot(rgrad, rgrad)))
        gnorm = np.sqrt(gnorm2)
        if gnorm < opts.grad_tol or it >= opts.max_iters:
            break
        tau = step_guess
        accepted = False
        for _ in range(ls.max_backtracks):
            cand = retract(x, -tau * rgrad)
            f_new = objective.value(cand)
            if f_new <= f - ls.sufficient_decrease * tau * gnorm2:
                accepted = True
                break
            tau *= ls.contraction
        if not accepted:
            stalled = True
            break
        it += 1
        rel = (f - f_new) / max(abs(f), np.finfo(float).tiny)
        x = cand
        f, cgrad = objective.value_and_grad(x)
        history.append((it, f, gnorm, tau))
        # next trial step: a little longer than the one that just worked
        step_guess = 2.0 * tau
        if rel < opts.rel_tol:
            gnorm = float(np.linalg.norm(project_tangent(x, 2.0 * cgrad)))
            break
    return MOResult(x, float(f), it, float(gnorm), stalled, history)


def write_trace(path, result):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["iteration", "objective", "grad_norm", "step"])
        for row in result.history:
            out.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3])])
