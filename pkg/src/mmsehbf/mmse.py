"""MMSE building blocks: closed-form digital beamformers, the scaling factor,
MSE matrices, the reduced analog objectives and the full-digital oracle.

Shapes follow one convention throughout: channel stacks are ``(N, n_rx, n_tx)``,
analog matrices are ``(n_ant, n_rf)``, per-subcarrier digital matrices are
stacked as ``(N, n_rf, n_streams)``. A single matrix where a stack is expected
is treated as ``N = 1``.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import SingularSystemError, herm_inv, herm_solve, hermitian, symmetrize

UNIT_MODULUS_TOL = 1e-12
POWER_TOL = 1e-9
WEIGHT_EIG_FLOOR = 1e-10


@dataclass(frozen=True)
class SystemDims:
    n_tx: int = 16
    n_rx: int = 16
    n_rf: int = 2
    n_streams: int = 2
    n_subcarriers: int = 1
    noise_var: float = 1.0

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "n_rf", "n_streams", "n_subcarriers"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.n_rf < self.n_streams:
            raise ValueError("n_rf must be >= n_streams")
        if self.n_rf > min(self.n_tx, self.n_rx):
            raise ValueError("n_rf must be <= min(n_tx, n_rx)")
        if not self.noise_var > 0:
            raise ValueError("noise_var must be positive")


@dataclass(frozen=True)
class Transceiver:
    """Overall per-subcarrier precoders ``v``, combiners ``w`` and scalings ``beta``."""

    v: np.ndarray
    w: np.ndarray
    beta: np.ndarray


@dataclass(frozen=True)
class HybridBeamformer:
    v_rf: np.ndarray
    w_rf: np.ndarray
    v_dig: np.ndarray  # unnormalized V_U per subcarrier
    w_dig: np.ndarray
    beta: np.ndarray

    @property
    def num_subcarriers(self):
        return self.v_dig.shape[0]

    def precoders(self):
        return self.v_rf @ (self.beta[:, None, None] * self.v_dig)

    def combiners(self):
        return self.w_rf @ self.w_dig

    def overall(self):
        return Transceiver(self.precoders(), self.combiners(), np.asarray(self.beta, dtype=float))

    def check(self, mod_tol=UNIT_MODULUS_TOL, power_tol=POWER_TOL):
        """Raise ``ValueError`` unless the analog parts are unit modulus and
        every subcarrier transmits at exactly unit power."""
        for name in ("v_rf", "w_rf"):
            dev = np.max(np.abs(np.abs(getattr(self, name)) - 1.0))
            if dev > mod_tol:
                raise ValueError(f"{name} violates unit modulus by {dev:.3g}")
        power = np.sum(np.abs(self.precoders()) ** 2, axis=(1, 2))
        if np.max(np.abs(power - 1.0)) > power_tol:
            raise ValueError(f"transmit power {power} is not 1")
        if np.any(np.asarray(self.beta) <= 0):
            raise ValueError("beta must be positive")


@dataclass(frozen=True)
class WeightMatrices:
    lam: np.ndarray  # (N, Ns, Ns) Hermitian positive definite

    def __post_init__(self):
        lam = self.lam
        if np.max(np.abs(lam - hermitian(lam))) > 1e-10:
            raise ValueError("weight matrices must be Hermitian")
        if np.min(np.linalg.eigvalsh(symmetrize(lam))) <= 0:
            raise ValueError("weight matrices must be positive definite")


def _stack(a):
    a = np.asarray(a)
    return a[None] if a.ndim == 2 else a


def _trace(a):
    return np.real(np.trace(a, axis1=-2, axis2=-1))


def mse_matrices(channels, v, w, beta, noise_var):
    """Modified MSE matrices ``T_k`` for overall beamformers ``v``, ``w``.

    ``T = (W^H H V / beta - I)(...)^H + sigma^2 beta^-2 W^H W``, which is the
    expanded trace argument of the modified MSE with Hermitian cross terms.
    """
    h, v, w = _stack(channels), _stack(v), _stack(w)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (h.shape[0],))
    if h.shape[1] != w.shape[1] or h.shape[2] != v.shape[1] or v.shape[2] != w.shape[2]:
        raise ValueError(f"dimension mismatch: H {h.shape}, V {v.shape}, W {w.shape}")
    ns = v.shape[2]
    eff = hermitian(w) @ h @ v / beta[:, None, None]
    err = eff - np.eye(ns)
    noise = (noise_var / beta**2)[:, None, None] * (hermitian(w) @ w)
    return symmetrize(err @ hermitian(err) + noise)


def mse_matrix(h, v_rf, v_dig, w_rf, w_dig, beta, noise_var):
    """``T`` for one subcarrier given the hybrid factors (``V_B = beta * v_dig``)."""
    v = v_rf @ (beta * np.asarray(v_dig))
    w = w_rf @ w_dig
    return mse_matrices(h, v, w, beta, noise_var)[0]


def modified_mse(h, v_rf, v_dig, w_rf, w_dig, beta, noise_var):
    return float(_trace(mse_matrix(h, v_rf, v_dig, w_rf, w_dig, beta, noise_var)))


def sum_mse(channels, trx, noise_var):
    """Sum over subcarriers of the modified MSE."""
    return float(np.sum(_trace(mse_matrices(channels, trx.v, trx.w, trx.beta, noise_var))))


def optimal_beta(v_rf, v_dig):
    """Scaling that makes ``||V_RF beta V_U||_F = 1``; one value per subcarrier."""
    v = np.asarray(v_rf) @ _stack(v_dig)
    power = np.sum(np.abs(v) ** 2, axis=(1, 2))
    if np.any(power <= 0):
        raise ValueError("precoder is zero; beta undefined")
    return power ** -0.5


def combiner_scale(w, lam=None):
    """``tr(W^H W)`` per subcarrier, or ``tr(Lambda W^H W)`` when weighted."""
    w = _stack(w)
    gram = hermitian(w) @ w
    if lam is None:
        return _trace(gram)
    return _trace(_stack(lam) @ gram)


def _solve_gram(lhs, rhs, allow_singular):
    if not allow_singular:
        return herm_solve(lhs, rhs)
    try:
        return herm_solve(lhs, rhs)
    except SingularSystemError:
        # minimum-norm minimizer; the product with the analog matrix is unique
        return np.linalg.pinv(symmetrize(lhs), rtol=1e-12, hermitian=True) @ rhs


def optimal_digital_precoder(v_rf, h1, noise_var, w_scale, lam=None, allow_singular=False):
    """Closed-form unnormalized digital precoders ``V_U,k``.

    ``h1`` holds ``H_k^H W_k`` (shape ``(N, n_tx, Ns)``), ``w_scale`` the
    per-subcarrier ``tr(W^H W)`` (or ``tr(Lambda W^H W)`` with ``lam``).
    With ``allow_singular`` a rank-deficient ``v_rf`` gets the minimum-norm
    solution instead of raising.
    """
    h1 = _stack(h1)
    w_scale = np.broadcast_to(np.asarray(w_scale, dtype=float), (h1.shape[0],))
    b = hermitian(v_rf) @ h1
    gram = hermitian(v_rf) @ v_rf
    rhs = b if lam is None else b @ _stack(lam)
    lhs = rhs @ hermitian(b) + (noise_var * w_scale)[:, None, None] * gram
    return _solve_gram(lhs, rhs, allow_singular)


def optimal_digital_combiner(w_rf, h2, noise_var, beta, lam=None, allow_singular=False):
    """Closed-form digital combiners; the weight matrix cancels out, so ``lam``
    is accepted for symmetry and ignored."""
    h2 = _stack(h2)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (h2.shape[0],))
    b = hermitian(w_rf) @ h2
    gram = hermitian(w_rf) @ w_rf
    lhs = b @ hermitian(b) + (noise_var / beta**2)[:, None, None] * gram
    return _solve_gram(lhs, b, allow_singular)


class ReducedObjective:
    """``f(A) = sum_k tr(L_k (M_k + g_k H_k^H A (A^H A)^-1 A^H H_k)^-1)``.

    Both analog sub-problems take this form. For the precoder ``H_k = H1_k``,
    ``g_k = 1/(sigma^2 w_k)`` and ``M_k = Lambda_k^-1`` when weighted; for the
    combiner ``H_k = H2_k``, ``g_k = beta_k^2/sigma^2`` and ``L_k = Lambda_k``.
    ``None`` stands for the identity.
    """

    def __init__(self, eff, gains, inner=None, outer=None):
        self.eff = _stack(eff)
        self.gains = np.broadcast_to(np.asarray(gains, dtype=float), (self.eff.shape[0],)).copy()
        self.inner = None if inner is None else _stack(inner)
        self.outer = None if outer is None else _stack(outer)
        self.n_streams = self.eff.shape[2]

    @classmethod
    def precoder(cls, h1, noise_var, w_scale, lam=None):
        gains = 1.0 / (noise_var * np.asarray(w_scale, dtype=float))
        inner = None if lam is None else herm_inv(_stack(lam))
        return cls(h1, gains, inner=inner)

    @classmethod
    def combiner(cls, h2, noise_var, beta, lam=None):
        gains = np.asarray(beta, dtype=float) ** 2 / noise_var
        return cls(h2, gains, outer=lam)

    def _p_inv(self, a):
        a_h = hermitian(a)
        gram_inv = herm_inv(a_h @ a)
        c = a_h @ self.eff  # (N, n_rf, Ns)
        quad = hermitian(c) @ (gram_inv @ c)
        base = np.eye(self.n_streams) if self.inner is None else self.inner
        p = base + self.gains[:, None, None] * quad
        return gram_inv, c, herm_inv(p)

    def value(self, a):
        _, _, p_inv = self._p_inv(a)
        if self.outer is None:
            return float(np.sum(_trace(p_inv)))
        return float(np.sum(_trace(self.outer @ p_inv)))

    def value_and_grad(self, a):
        """Objective and conjugate gradient ``df/dA*``."""
        gram_inv, c, p_inv = self._p_inv(a)
        if self.outer is None:
            val = float(np.sum(_trace(p_inv)))
            k = p_inv @ p_inv
        else:
            val = float(np.sum(_trace(self.outer @ p_inv)))
            k = p_inv @ self.outer @ p_inv
        x = (self.gains[:, None, None] * self.eff) @ k
        s = np.tensordot(x, c.conj(), axes=([0, 2], [0, 2]))  # sum_k g H K C^H
        t1 = s @ gram_inv
        grad = a @ (gram_inv @ (hermitian(a) @ t1)) - t1
        return val, grad

    def grad(self, a):
        return self.value_and_grad(a)[1]


def reduced_objective_J(v_rf, h1, noise_var, w_scale, lam=None):
    """Sum-MSE left after optimizing the digital precoders and beta for fixed ``v_rf``."""
    return ReducedObjective.precoder(h1, noise_var, w_scale, lam).value(v_rf)


def reduced_objective_I(w_rf, h2, noise_var, beta, lam=None):
    """Receive-side twin of :func:`reduced_objective_J`."""
    return ReducedObjective.combiner(h2, noise_var, beta, lam).value(w_rf)


def spectral_efficiency(channels, trx, noise_var):
    """Average over subcarriers of ``log2 det(I + (W^H W)^-1 W^H H V V^H H^H W / sigma^2)``."""
    h, v, w = _stack(channels), _stack(trx.v), _stack(trx.w)
    gram = symmetrize(hermitian(w) @ w)
    m = hermitian(w) @ h @ v
    signal = symmetrize(gram + m @ hermitian(m) / noise_var)
    evals = np.linalg.eigvalsh(gram)
    if np.any(evals[:, 0] <= 1e-14 * evals[:, -1]):
        raise SingularSystemError("combiner is rank deficient")
    _, ld0 = np.linalg.slogdet(gram)
    _, ld1 = np.linalg.slogdet(signal)
    rates = (ld1 - ld0) / np.log(2)
    return float(np.mean(np.maximum(rates, 0.0)))


def range_spectral_efficiency(channels, trx, noise_var, rtol=1e-10):
    """Spectral efficiency measured on the column space of each combiner.

    Equals :func:`spectral_efficiency` for full-rank combiners; combiners that
    shut a stream off (zero or dependent columns) are reduced to an
    orthonormal basis of their range instead of raising.
    """
    h, v, w = _stack(channels), _stack(trx.v), _stack(trx.w)
    rates = np.empty(h.shape[0])
    for k in range(h.shape[0]):
        u, s, _ = np.linalg.svd(w[k], full_matrices=False)
        if s.size == 0 or s[0] == 0:
            rates[k] = 0.0
            continue
        q = u[:, s > rtol * s[0]]
        m = hermitian(q) @ h[k] @ v[k]
        _, ld = np.linalg.slogdet(np.eye(q.shape[1]) + m @ hermitian(m) / noise_var)
        rates[k] = max(ld / np.log(2), 0.0)
    return float(np.mean(rates))


def optimal_weight(t):
    """``Lambda = T^-1`` per subcarrier.

    Returns ``(lam, clamped)``; eigenvalues of ``T`` below ``1e-10`` are
    raised to that floor before inversion and ``clamped`` reports it.
    """
    t = symmetrize(_stack(t))
    evals, evecs = np.linalg.eigh(t)
    clamped = bool(np.any(evals < WEIGHT_EIG_FLOOR))
    evals = np.maximum(evals, WEIGHT_EIG_FLOOR)
    lam = (evecs / evals[:, None, :]) @ hermitian(evecs)
    return symmetrize(lam), clamped


def wmmse_objective(t, lam):
    """``sum_k tr(Lambda_k T_k) - log det Lambda_k`` (natural log)."""
    t, lam = _stack(t), _stack(lam)
    _, logdet = np.linalg.slogdet(symmetrize(lam))
    return float(np.sum(_trace(lam @ t) - logdet))


def mmse_power_allocation(singular_values, noise_var):
    """Minimize ``sum_i sigma^2 / (p_i s_i^2 + sigma^2)`` over the unit simplex.

    KKT gives ``p_i = nu*sigma/s_i - sigma^2/s_i^2`` on the active set; the
    weakest streams are dropped until every active power is non-negative.
    """
    s = np.asarray(singular_values, dtype=float)
    order = np.argsort(-s, kind="stable")
    ss = s[order]
    sigma = np.sqrt(noise_var)
    p_sorted = np.zeros_like(ss)
    n_active = int(np.count_nonzero(ss > 0))
    while n_active > 0:
        act = ss[:n_active]
        nu = (1.0 + np.sum(noise_var / act**2)) / np.sum(sigma / act)
        p = nu * sigma / act - noise_var / act**2
        if p[-1] >= 0:
            p_sorted[:n_active] = p
            break
        n_active -= 1
    p_sorted = np.maximum(p_sorted, 0.0)
    if p_sorted.sum() == 0:
        # zero channel: every allocation gives the same objective
        p_sorted[:] = 1.0
    p_sorted /= p_sorted.sum()
    out = np.empty_like(p_sorted)
    out[order] = p_sorted
    return out


def power_allocation_objective(p, singular_values, noise_var):
    s = np.asarray(singular_values, dtype=float)
    return float(np.sum(noise_var / (np.asarray(p) * s**2 + noise_var)))


def wiener_combiner(channels, v, noise_var, beta=1.0):
    """Unconstrained MMSE combiner ``(H V V^H H^H + sigma^2 beta^-2 I)^-1 H V``."""
    h, v = _stack(channels), _stack(v)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (h.shape[0],))
    hv = h @ v
    lhs = hermitian(hv) @ hv + (noise_var / beta**2)[:, None, None] * np.eye(v.shape[2])
    # push-through form keeps the solve at Ns x Ns
    return hermitian(herm_solve(lhs, hermitian(hv)))


def _top_right_singular(channels, n_streams):
    h = _stack(channels)
    _, s, vh = np.linalg.svd(h)
    return s[:, :n_streams], hermitian(vh)[:, :, :n_streams]


def full_digital_mmse(channels, n_streams, noise_var):
    """Unconstrained sum-MSE optimal transceiver on every subcarrier.

    Precoder: top right singular vectors with the MMSE power allocation.
    Combiner: the Wiener filter for that precoder. ``beta = 1`` because the
    precoder already meets the power constraint with equality.
    """
    s, vecs = _top_right_singular(channels, n_streams)
    p = np.stack([mmse_power_allocation(sk, noise_var) for sk in s])
    v = vecs * np.sqrt(p)[:, None, :]
    w = wiener_combiner(channels, v, noise_var)
    return Transceiver(v, w, np.ones(v.shape[0]))


def full_digital_rate(channels, n_streams, noise_var):
    """Rate-maximizing unconstrained transceiver: water-filling over the top
    ``n_streams`` eigenmodes with the Wiener combiner."""
    s, vecs = _top_right_singular(channels, n_streams)
    p = np.stack([_waterfill(sk**2 / noise_var) for sk in s])
    v = vecs * np.sqrt(p)[:, None, :]
    w = wiener_combiner(channels, v, noise_var)
    return Transceiver(v, w, np.ones(v.shape[0]))


def _waterfill(gains):
    order = np.argsort(-gains, kind="stable")
    g = gains[order]
    p = np.zeros_like(g)
    for n in range(len(g), 0, -1):
        if g[n - 1] <= 0:
            continue
        level = (1.0 + np.sum(1.0 / g[:n])) / n
        cand = level - 1.0 / g[:n]
        if cand[-1] >= 0:
            p[:n] = cand
            break
    out = np.empty_like(p)
    out[order] = p
    return out
