"""Eigen-structure analog beamformer solvers.

All solvers work on the generic reduced objective of :mod:`mmsehbf.mmse`:
effective channels ``H_k`` (``H1_k`` on the transmit side, ``H2_k`` on the
receive side) with per-subcarrier gains ``g_k``. The named wrappers
(``gevd_update_column``, ``evd_lb_analog``, ...) take transmit-side
arguments; the driver calls the generic forms for both sides.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .linalg import herm_inv, hermitian, symmetrize, top_eigvecs
from .mmse import _stack, optimal_digital_precoder

DEFAULT_POWER_ITERS = 10
# a column update may not push the analog Gram below this reciprocal condition
GEVD_RCOND_MIN = 1e-10


def phase_extract(mat, return_flag=False):
    """Entrywise ``exp(j*angle(x))``; exact zeros map to 1."""
    mat = np.asarray(mat)
    zero = mat == 0
    out = np.exp(1j * np.angle(mat))
    if return_flag:
        return out, bool(np.any(zero))
    return out


def power_gevd(u, w, n_iters=DEFAULT_POWER_ITERS, x0=None, psd=None):
    """Dominant eigenpair of the Hermitian pencil ``(u, w)`` by power iteration.

    Each step applies ``w^-1 u`` through a Cholesky solve. If ``u`` is not
    positive semidefinite the pencil is shifted by ``s*w`` first so the
    iteration targets the largest (not the largest-magnitude) eigenvalue.
    Returns ``(x, rayleigh_quotient)``.
    """
    u = symmetrize(np.asarray(u, dtype=complex))
    w = symmetrize(np.asarray(w, dtype=complex))
    try:
        factor = cho_factor(w, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("w must be positive definite") from exc
    if psd is None:
        lo = np.linalg.eigvalsh(u)[0]
        psd = lo >= -1e-12 * max(1.0, np.max(np.abs(np.diag(u))))
    shift = 0.0
    if not psd:
        lo_u = np.linalg.eigvalsh(u)[0]
        lo_w = np.linalg.eigvalsh(w)[0]
        shift = max(0.0, -lo_u) / lo_w
    if x0 is None:
        x = u[:, int(np.argmax(np.real(np.diag(u))))].copy()
        if not np.any(x):
            x = np.zeros(u.shape[0], dtype=complex)
            x[0] = 1.0
    else:
        x = np.array(x0, dtype=complex)
    x = x / np.linalg.norm(x)
    for _ in range(n_iters):
        y = cho_solve(factor, u @ x)
        if shift:
            y = y + shift * x
        norm = np.linalg.norm(y)
        if norm == 0:
            break
        x = y / norm
    return x, rayleigh_quotient(u, w, x)


def rayleigh_quotient(u, w, x):
    return float(np.real(np.vdot(x, u @ x)) / np.real(np.vdot(x, w @ x)))


@dataclass(frozen=True)
class GevdWorkspace:
    """Pencil for one column update: ``J ~ tr(A^-1 L) - v^H U v / v^H W v``."""

    a_m: np.ndarray
    u_m: np.ndarray
    w_m: np.ndarray


def gevd_workspace(a_rf, m, eff, gain, inner=None, outer=None):
    """Build ``A_m``, ``U_m``, ``W_m`` for column ``m`` (narrowband only).

    ``eff`` is the ``(n_ant, Ns)`` effective channel, ``gain`` the scalar
    ``g``; ``inner``/``outer`` are the optional weight matrices of the
    reduced objective (identity when ``None``).
    """
    eff = np.asarray(eff)
    if eff.ndim == 3:
        if eff.shape[0] != 1:
            raise ValueError("GEVD column updates are narrowband only")
        eff = eff[0]
        inner = None if inner is None else _stack(inner)[0]
        outer = None if outer is None else _stack(outer)[0]
    gain = float(np.ravel(gain)[0])
    n_ant, ns = eff.shape
    c = gain / n_ant
    rest = np.delete(a_rf, m, axis=1)
    proj = hermitian(eff) @ rest
    base = np.eye(ns) if inner is None else inner
    a_m = symmetrize(base + c * proj @ hermitian(proj))
    a_inv = herm_inv(a_m)
    left = a_inv if outer is None else a_inv @ outer
    u_m = symmetrize(c * eff @ left @ a_inv @ hermitian(eff))
    w_m = symmetrize(np.eye(n_ant) / n_ant + c * eff @ a_inv @ hermitian(eff))
    return GevdWorkspace(a_m, u_m, w_m)


def gevd_column(a_rf, m, eff, gain, inner=None, outer=None, n_iters=DEFAULT_POWER_ITERS):
    """Copy of ``a_rf`` with column ``m`` replaced by the phase of the dominant
    generalized eigenvector, warm-started from the current column.

    The pencil treats ``v v^H / n_ant`` as a projector, which fails when the
    new column nearly repeats another one; such an update would make the
    analog matrix rank deficient and is skipped.
    """
    ws = gevd_workspace(a_rf, m, eff, gain, inner, outer)
    z, _ = power_gevd(ws.u_m, ws.w_m, n_iters, x0=a_rf[:, m], psd=True)
    out = np.array(a_rf, copy=True)
    out[:, m] = phase_extract(z)
    if out.shape[1] > 1:
        ev = np.linalg.eigvalsh(hermitian(out) @ out)
        if ev[0] < GEVD_RCOND_MIN * ev[-1]:
            return np.array(a_rf, copy=True)
    return out


def gevd_sweep(a_rf, eff, gain, inner=None, outer=None, n_iters=DEFAULT_POWER_ITERS):
    """One pass over all columns, each update seeing the columns already updated."""
    for m in range(a_rf.shape[1]):
        a_rf = gevd_column(a_rf, m, eff, gain, inner, outer, n_iters)
    return a_rf


def gevd_update_column(v_rf, m, h1, noise_var, w_scale, lam=None, n_iters=DEFAULT_POWER_ITERS):
    """Transmit-side column update with ``g = 1/(sigma^2 w)``."""
    inner = None if lam is None else herm_inv(_stack(lam))
    gain = 1.0 / (noise_var * float(np.ravel(w_scale)[0]))
    return gevd_column(v_rf, m, h1, gain, inner=inner, n_iters=n_iters)


def weighted_gram(eff, gains, weights=None):
    """``sum_k g_k H_k W_k H_k^H`` (``W_k = I`` when ``weights`` is None)."""
    eff = _stack(eff)
    gains = np.broadcast_to(np.asarray(gains, dtype=float), (eff.shape[0],))
    scaled = gains[:, None, None] * eff
    if weights is not None:
        scaled = scaled @ _stack(weights)
    return symmetrize(np.tensordot(scaled, eff.conj(), axes=([0, 2], [0, 2])))


def evd_lb(eff, gains, n_rf, weights=None):
    _, vecs = top_eigvecs(weighted_gram(eff, gains, weights), n_rf)
    return phase_extract(vecs)


def bound_surrogate(eff, gains):
    """``sum_k G_k`` with ``G_k = g H (I + g H^H H)^-1 H^H`` so that
    ``(I + g H H^H)^-1 = I - G_k``."""
    eff = _stack(eff)
    gains = np.broadcast_to(np.asarray(gains, dtype=float), (eff.shape[0],))
    ns = eff.shape[2]
    inner = np.eye(ns) + gains[:, None, None] * (hermitian(eff) @ eff)
    g = gains[:, None, None] * eff @ herm_inv(inner) @ hermitian(eff)
    return symmetrize(g.sum(axis=0))


def evd_ub(eff, gains, n_rf):
    _, vecs = top_eigvecs(bound_surrogate(eff, gains), n_rf)
    return phase_extract(vecs)


def evd_lb_analog(h1, noise_var, w_scale, n_rf, lam=None):
    """Phase of the top ``n_rf`` eigenvectors of ``sum_k H1_k H1_k^H / (sigma^2 w_k)``."""
    return evd_lb(h1, 1.0 / (noise_var * np.asarray(w_scale, dtype=float)), n_rf, lam)


def evd_ub_analog(h1, noise_var, w_scale, n_rf):
    """Phase of the top ``n_rf`` eigenvectors of ``sum_k G_k``."""
    return evd_ub(h1, 1.0 / (noise_var * np.asarray(w_scale, dtype=float)), n_rf)


def lower_bound(eff, gains, iso):
    """Jensen lower bound ``N^2 Ns^2 / sum_k tr(Q_k)`` at isometry ``iso``."""
    eff = _stack(eff)
    n, _, ns = eff.shape
    proj = hermitian(eff) @ iso
    tr_q = ns + np.sum(np.asarray(gains) * np.real(np.sum(np.abs(proj) ** 2, axis=(1, 2))))
    return n**2 * ns**2 / tr_q


def upper_bound(eff, gains, iso):
    """``sum_k tr(B^H A_k^-1 B) - N (n_rf - Ns)`` at isometry ``B = iso``.

    The constant is zero when ``n_rf == Ns``; otherwise it accounts for the
    unit eigenvalues ``(B^H A_k B)^-1`` carries beyond those of ``Q_k^-1``.
    """
    eff = _stack(eff)
    n, _, ns = eff.shape
    n_rf = iso.shape[1]
    total = n * n_rf - np.real(np.trace(hermitian(iso) @ bound_surrogate(eff, gains) @ iso))
    return float(total - n * (n_rf - ns))


def omp_targets(eff, gains, weights=None):
    """Unconstrained optimal precoders ``(H H^H + I/g)^-1 H`` per subcarrier."""
    eff = _stack(eff)
    n_ant = eff.shape[1]
    scale = 1.0 / np.asarray(gains, dtype=float)  # sigma^2 w
    return optimal_digital_precoder(np.eye(n_ant), eff, 1.0, scale, weights)


def omp_residual(eff, gains, a_sel, targets, weights=None):
    """Problem-level residual ``sum_k tr(L R^H Q R)`` with ``Q = H L H^H + I/g``.

    This is the MSE gap between the selected-column precoders and the
    unconstrained targets; it cannot grow as columns are added.
    """
    eff = _stack(eff)
    gains = np.asarray(gains, dtype=float)
    if a_sel.shape[1] == 0:
        resid = targets
    else:
        v_u = optimal_digital_precoder(a_sel, eff, 1.0, 1.0 / gains, weights)
        resid = targets - a_sel @ v_u
    hw = eff if weights is None else eff @ _stack(weights)
    q_r = hw @ (hermitian(eff) @ resid) + (1.0 / gains)[:, None, None] * resid
    inner = hermitian(resid) @ q_r
    if weights is not None:
        inner = _stack(weights) @ inner
    return float(np.sum(np.real(np.trace(inner, axis1=1, axis2=2))))


def omp(eff, gains, dictionary, n_rf, weights=None):
    """Greedy column selection from ``dictionary``.

    The residual starts at the unconstrained optimal precoders; each round
    picks the unused column with the largest ``sum_k ||d^H R_k||^2`` (lowest
    index on ties), refits the digital part in closed form and updates the
    residual. Returns ``(selected_columns, indices)``.
    """
    eff = _stack(eff)
    gains = np.broadcast_to(np.asarray(gains, dtype=float), (eff.shape[0],))
    if dictionary.shape[1] < n_rf:
        raise ValueError(f"dictionary has {dictionary.shape[1]} columns, need {n_rf}")
    targets = omp_targets(eff, gains, weights)
    resid = targets
    chosen = []
    for _ in range(n_rf):
        corr = np.sum(np.abs(hermitian(dictionary)[None] @ resid) ** 2, axis=(0, 2))
        corr[chosen] = -np.inf
        chosen.append(int(np.argmax(corr)))
        sel = dictionary[:, chosen]
        v_u = optimal_digital_precoder(sel, eff, 1.0, 1.0 / gains, weights)
        resid = targets - sel @ v_u
    return dictionary[:, chosen], chosen


def omp_analog(h1, dictionary, noise_var, w_scale, n_rf, lam=None):
    """Transmit-side OMP; columns are returned unit-norm as in the dictionary."""
    gains = 1.0 / (noise_var * np.asarray(w_scale, dtype=float))
    return omp(h1, gains, dictionary, n_rf, lam)
