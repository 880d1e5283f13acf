"""Alternating transmit/receive hybrid beamformer design.

One outer iteration updates the precoder for the current overall combiners,
then the combiner for the new precoder. The WMMSE loop adds a weight update
``Lambda_k = T_k^-1`` after the combiner step. Every analog algorithm works on
the same reduced objective, so the two sides share one code path.
"""

import csv
import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .channel import ChannelRealization, make_rng, rx_dictionary, tx_dictionary
from .linalg import herm_inv, hermitian
from .manifold import MOOptions, mo_solve, random_point
from .mmse import (
    HybridBeamformer,
    ReducedObjective,
    Transceiver,
    WeightMatrices,
    _stack,
    combiner_scale,
    full_digital_mmse,
    full_digital_rate,
    mse_matrices,
    optimal_beta,
    optimal_digital_combiner,
    optimal_digital_precoder,
    optimal_weight,
    range_spectral_efficiency,
    sum_mse,
    wmmse_objective,
)
from .spectral import DEFAULT_POWER_ITERS, evd_lb, evd_ub, gevd_sweep, omp, phase_extract

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """A solve produced non-finite values or hit an unrecoverable numerical failure."""


class Algorithm(str, Enum):
    MO = "mo"
    GEVD = "gevd"
    EVD_LB = "evd_lb"
    EVD_UB = "evd_ub"
    OMP = "omp"
    FULL_DIGITAL = "full_digital"


class Criterion(str, Enum):
    MMSE = "mmse"
    WMMSE = "wmmse"


class Init(str, Enum):
    VFD = "vfd"
    RANDOM = "random"


@dataclass(frozen=True)
class SolverOptions:
    algorithm: Algorithm = Algorithm.MO
    criterion: Criterion = Criterion.MMSE
    init: Init = Init.VFD
    outer_tol: float = 1e-5
    outer_cap: int = 50
    mo: MOOptions = field(default_factory=MOOptions)
    power_iters: int = DEFAULT_POWER_ITERS
    seed: int = 0
    quant_bits: int | None = None
    pin_weights: bool = False  # keep Lambda = I in the WMMSE loop
    keep_inner: bool = False  # store manifold iteration histories in the trace

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "criterion", Criterion(self.criterion))
        object.__setattr__(self, "init", Init(self.init))
        if not self.outer_tol > 0:
            raise ValueError("outer_tol must be positive")
        if self.outer_cap < 1:
            raise ValueError("outer_cap must be positive")
        if self.power_iters < 1:
            raise ValueError("power_iters must be positive")
        if self.quant_bits is not None and self.quant_bits < 1:
            raise ValueError("quant_bits must be a positive integer")
        if self.algorithm is Algorithm.EVD_UB and self.criterion is Criterion.WMMSE:
            raise ValueError("EVD_UB has no weighted form")

    def check_dims(self, dims):
        if self.algorithm is Algorithm.GEVD and dims.n_subcarriers != 1:
            raise ValueError("GEVD requires narrowband (n_subcarriers = 1)")


@dataclass
class RunTrace:
    iterations: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    spectral_efficiency: list = field(default_factory=list)
    best_iteration: int = 0  # 1-based index of the returned iterate
    stalled_inner: int = 0
    inner: list = field(default_factory=list)  # (outer_iter, side, MOResult) when kept

    def append(self, obj, se):
        self.iterations.append(len(self.iterations) + 1)
        self.objective.append(float(obj))
        self.spectral_efficiency.append(float(se))

    def __len__(self):
        return len(self.iterations)

    @property
    def returned_last(self):
        return self.best_iteration == len(self.iterations)


def write_run_trace(path, trace):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["outer_iter", "objective", "spectral_efficiency"])
        for it, obj, se in zip(trace.iterations, trace.objective, trace.spectral_efficiency):
            out.writerow([it, repr(obj), repr(se)])


@dataclass(frozen=True)
class SolveResult:
    transceiver: Transceiver
    trace: RunTrace
    beamformer: HybridBeamformer | None = None
    weights: WeightMatrices | None = None


def _channels(channel):
    if isinstance(channel, ChannelRealization):
        return channel.per_subcarrier
    h = _stack(np.asarray(channel))
    if not np.all(np.isfinite(h)):
        raise ValueError("channel contains non-finite entries")
    return h


def vfd_init(channels, dims):
    """Full-digital MMSE combiners used to seed the first precoder step."""
    return full_digital_mmse(_channels(channels), dims.n_streams, dims.noise_var).w


class _Side:
    """Analog solver for one side of the link, bound to a reduced objective."""

    def __init__(self, opts, dims, dictionary):
        self.opts = opts
        self.dims = dims
        self.dictionary = dictionary
        self.last = None

    def solve(self, start, eff, gains, inner=None, outer=None, weights=None):
        alg = self.opts.algorithm
        n_rf = self.dims.n_rf
        if alg is Algorithm.MO:
            res = mo_solve(ReducedObjective(eff, gains, inner, outer), start, self.opts.mo)
            if res.stalled:
                log.debug("manifold line search stalled after %d steps", res.iterations)
            self.last = res
            return res.point, res.stalled
        if alg is Algorithm.GEVD:
            return gevd_sweep(start, eff, gains, inner, outer, self.opts.power_iters), False
        if alg is Algorithm.EVD_LB:
            return evd_lb(eff, gains, n_rf, weights), False
        if alg is Algorithm.EVD_UB:
            return evd_ub(eff, gains, n_rf), False
        if alg is Algorithm.OMP:
            if self.dictionary is None:
                raise SolverError("OMP needs a ray dictionary; pass a ChannelRealization with rays")
            cols, _ = omp(eff, gains, self.dictionary, n_rf, weights)
            return phase_extract(cols), False
        raise SolverError(f"{alg.value} is not an analog algorithm")


@dataclass
class _State:
    v_rf: np.ndarray
    w_rf: np.ndarray
    v_dig: np.ndarray = None
    beta: np.ndarray = None
    w_dig: np.ndarray = None
    w: np.ndarray = None  # overall combiners used by the next precoder step
    lam: np.ndarray | None = None

    def beamformer(self):
        return HybridBeamformer(self.v_rf, self.w_rf, self.v_dig, self.w_dig, self.beta)


class _Alternation:
    def __init__(self, channels, dims, opts, dictionaries):
        self.h = channels
        self.dims = dims
        self.opts = opts
        tx_dict, rx_dict = dictionaries if dictionaries is not None else (None, None)
        self.tx = _Side(opts, dims, tx_dict)
        self.rx = _Side(opts, dims, rx_dict)
        self.stalls = 0

    def precoder_step(self, st):
        s2 = self.dims.noise_var
        h1 = hermitian(self.h) @ st.w
        w_scale = combiner_scale(st.w, st.lam)
        if not np.all(w_scale > 0):
            raise SolverError("combiner vanished on some subcarrier; the precoder step is undefined")
        gains = 1.0 / (s2 * w_scale)
        inner = None if st.lam is None else herm_inv(st.lam)
        st.v_rf, stalled = self.tx.solve(st.v_rf, h1, gains, inner=inner, weights=st.lam)
        self.stalls += stalled
        st.v_dig = optimal_digital_precoder(st.v_rf, h1, s2, w_scale, st.lam)
        st.beta = optimal_beta(st.v_rf, st.v_dig)

    def combiner_step(self, st):
        s2 = self.dims.noise_var
        h2 = self.h @ (st.v_rf @ st.v_dig)
        gains = st.beta**2 / s2
        st.w_rf, stalled = self.rx.solve(st.w_rf, h2, gains, outer=st.lam, weights=st.lam)
        self.stalls += stalled
        st.w_dig = optimal_digital_combiner(st.w_rf, h2, s2, st.beta)
        st.w = st.w_rf @ st.w_dig

    def mse(self, st):
        return mse_matrices(self.h, st.v_rf @ (st.beta[:, None, None] * st.v_dig), st.w,
                            st.beta, self.dims.noise_var)


def _start(channels, dims, opts, rng):
    """Initial analog matrices and overall combiners ``W^(0)``."""
    v_rf = random_point(rng, (dims.n_tx, dims.n_rf))
    w_rf = random_point(rng, (dims.n_rx, dims.n_rf))
    if opts.init is Init.VFD:
        w0 = vfd_init(channels, dims)
    else:
        n = channels.shape[0]
        v_dig = np.broadcast_to(np.eye(dims.n_rf, dims.n_streams), (n, dims.n_rf, dims.n_streams))
        beta = optimal_beta(v_rf, v_dig)
        h2 = channels @ (v_rf @ v_dig)
        w0 = w_rf @ optimal_digital_combiner(w_rf, h2, dims.noise_var, beta)
    return _State(v_rf=v_rf, w_rf=w_rf, w=w0)


def _check_finite(value, what):
    if not np.isfinite(value):
        raise SolverError(f"{what} became non-finite")


def _loop(channels, dims, opts, dictionaries, weighted):
    channels = _channels(channels)
    if channels.shape[1:] != (dims.n_rx, dims.n_tx) or channels.shape[0] != dims.n_subcarriers:
        raise ValueError(f"channel stack {channels.shape} does not match {dims}")
    opts.check_dims(dims)
    rng = make_rng(opts.seed)
    alt = _Alternation(channels, dims, opts, dictionaries)
    trace = RunTrace()
    best = None
    prev = None
    try:
        st = _start(channels, dims, opts, rng)
        if weighted:
            st.lam = np.broadcast_to(np.eye(dims.n_streams), (channels.shape[0],) + (dims.n_streams,) * 2).copy()
        for _ in range(opts.outer_cap):
            alt.precoder_step(st)
            if opts.keep_inner and alt.tx.last is not None:
                trace.inner.append((len(trace) + 1, "tx", alt.tx.last))
            alt.combiner_step(st)
            if opts.keep_inner and alt.rx.last is not None:
                trace.inner.append((len(trace) + 1, "rx", alt.rx.last))
            t = alt.mse(st)
            if weighted:
                if not opts.pin_weights:
                    st.lam, clamped = optimal_weight(t)
                    if clamped:
                        log.info("weight update clamped a near-zero MSE eigenvalue")
                obj = wmmse_objective(t, st.lam)
            else:
                obj = float(np.sum(np.real(np.trace(t, axis1=1, axis2=2))))
            _check_finite(obj, "objective")
            trx = Transceiver(st.v_rf @ (st.beta[:, None, None] * st.v_dig), st.w, st.beta)
            trace.append(obj, range_spectral_efficiency(channels, trx, dims.noise_var))
            if best is None or obj < best[0]:
                best = (obj, st.beamformer(), None if st.lam is None else st.lam.copy(), len(trace))
            if prev is not None and abs(prev - obj) <= opts.outer_tol * abs(prev):
                break
            prev = obj
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"numerical failure in outer iteration {len(trace) + 1}: {exc}") from exc
    trace.stalled_inner = alt.stalls
    if alt.stalls:
        log.info("%d manifold solves stopped on a failed line search", alt.stalls)
    _, bf, lam, trace.best_iteration = best
    if not trace.returned_last:
        log.info("returning best iterate %d of %d", trace.best_iteration, len(trace))
    return bf, (None if lam is None else WeightMatrices(lam)), trace


def alternate_mmse(channels, dims, opts=None, dictionaries=None):
    """Sum-MSE alternating design. Returns ``(HybridBeamformer, RunTrace)``.

    ``dictionaries`` is ``(tx, rx)`` array-response matrices, needed for OMP.
    """
    opts = opts or SolverOptions()
    bf, _, trace = _loop(channels, dims, replace(opts, criterion=Criterion.MMSE), dictionaries, False)
    return bf, trace


def alternate_wmmse(channels, dims, opts=None, dictionaries=None):
    """Weighted sum-MSE design with ``Lambda_k = T_k^-1`` refreshed after each
    combiner step. Returns ``(HybridBeamformer, WeightMatrices, RunTrace)``."""
    opts = opts or SolverOptions(criterion=Criterion.WMMSE)
    opts = replace(opts, criterion=Criterion.WMMSE)
    return _loop(channels, dims, opts, dictionaries, True)


def quantize_angle(phase, bits):
    """Nearest multiple of ``2*pi/2^bits``; exact ties go toward zero."""
    step = 2 * np.pi / 2**bits
    x = np.asarray(phase) / step
    return np.sign(x) * np.ceil(np.abs(x) - 0.5) * step


def quantize_phases(beamformer, bits, channels, noise_var, lam=None):
    """Quantize both analog matrices, then refit ``V_U``, ``beta`` and ``W_B`` once.

    Coarse grids can make two analog columns equal up to sign; the refit then
    uses minimum-norm digital solutions.
    """
    h = _channels(channels)
    v_rf = np.exp(1j * quantize_angle(np.angle(beamformer.v_rf), bits))
    w_rf = np.exp(1j * quantize_angle(np.angle(beamformer.w_rf), bits))
    w = w_rf @ beamformer.w_dig
    v_dig = optimal_digital_precoder(v_rf, hermitian(h) @ w, noise_var, combiner_scale(w, lam), lam,
                                     allow_singular=True)
    beta = optimal_beta(v_rf, v_dig)
    w_dig = optimal_digital_combiner(w_rf, h @ (v_rf @ v_dig), noise_var, beta, allow_singular=True)
    return HybridBeamformer(v_rf, w_rf, v_dig, w_dig, beta)


def solve(channel, dims, opts=None):
    """Run the configured algorithm and criterion on one channel realization.

    Ray dictionaries are taken from ``channel.rays`` when available. Phase
    quantization is applied when ``opts.quant_bits`` is set.
    """
    opts = opts or SolverOptions()
    h = _channels(channel)
    if opts.algorithm is Algorithm.FULL_DIGITAL:
        fd = full_digital_rate if opts.criterion is Criterion.WMMSE else full_digital_mmse
        trx = fd(h, dims.n_streams, dims.noise_var)
        trace = RunTrace()
        trace.append(sum_mse(h, trx, dims.noise_var), range_spectral_efficiency(h, trx, dims.noise_var))
        trace.best_iteration = 1
        return SolveResult(trx, trace)
    dicts = None
    if isinstance(channel, ChannelRealization) and channel.rays is not None:
        dicts = (tx_dictionary(channel.rays, dims.n_tx), rx_dictionary(channel.rays, dims.n_rx))
    weights = None
    if opts.criterion is Criterion.WMMSE:
        bf, weights, trace = alternate_wmmse(h, dims, opts, dicts)
    else:
        bf, trace = alternate_mmse(h, dims, opts, dicts)
    if opts.quant_bits is not None:
        lam = None if weights is None else weights.lam
        bf = quantize_phases(bf, opts.quant_bits, h, dims.noise_var, lam)
    bf.check()
    return SolveResult(bf.overall(), trace, bf, weights)
