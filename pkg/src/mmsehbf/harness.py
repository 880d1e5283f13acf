"""Monte Carlo link-level experiments: SNR sweeps, convergence and quantization studies.

Every trial draws its channel from a stream keyed on ``(seed, trial)``; all
algorithms and SNR points of a trial see the same channel and the same
symbol/noise draws, so comparisons between algorithms are paired.
"""

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .channel import make_rng, random_channel
from .driver import Algorithm, Criterion, Init, SolverOptions, quantize_phases, solve
from .manifold import MOOptions
from .mmse import SystemDims, _stack, range_spectral_efficiency, sum_mse

log = logging.getLogger(__name__)

METRICS = ("mse", "ber", "se")
SWEEP_COLUMNS = ("algorithm", "criterion", "scenario", "snr_db", "metric", "value", "stderr", "trials", "seed")
QUANT_COLUMNS = ("algorithm", "criterion", "scenario", "snr_db", "quant_bits", "metric", "value", "stderr",
                 "trials", "seed")
CONVERGE_COLUMNS = ("algorithm", "criterion", "scenario", "init", "outer_iter", "objective", "stderr", "trials",
                    "seed")
CONVERGE_SUMMARY_COLUMNS = ("algorithm", "criterion", "scenario", "init", "statistic", "value", "stderr", "trials",
                            "seed")


class InvalidConfig(ValueError):
    """Constraint violations as ``(message, field names)`` pairs."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(msg for msg, _ in self.problems))


_NORMALIZERS = {
    "snr_db": lambda v: tuple(float(x) for x in v),
    "algorithms": lambda v: tuple(Algorithm(a).value for a in v),
    "inits": lambda v: tuple(Init(i).value for i in v),
    "criterion": lambda v: Criterion(v).value,
    "quant_bits": lambda v: tuple(int(q) for q in v),
    "angular_spread": float,
    "outer_tol": float,
    "inner_tol": float,
    "grad_tol": float,
}


@dataclass(frozen=True)
class ExperimentConfig:
    n_tx: int = 16
    n_rx: int = 16
    n_rf: int = 2
    n_streams: int = 2
    n_subcarriers: int = 1
    num_clusters: int = 5
    rays_per_cluster: int = 10
    angular_spread: float = 10.0
    snr_db: tuple = (-10.0,)
    trials: int = 10
    algorithms: tuple = ("mo",)
    criterion: str = "mmse"
    inits: tuple = ("vfd",)
    seed: int = 0
    quant_bits: tuple = ()
    symbols: int = 1000
    outer_tol: float = 1e-5
    outer_cap: int = 50
    inner_tol: float = 1e-5
    grad_tol: float = 1e-8
    inner_cap: int = 500
    power_iters: int = 10
    out: str = "results"

    def __post_init__(self):
        problems = []
        for name, conv in _NORMALIZERS.items():
            try:
                object.__setattr__(self, name, conv(getattr(self, name)))
            except (TypeError, ValueError) as exc:
                problems.append((f"invalid {name}: {exc}", (name,)))
        if not problems:
            problems = config_errors(self)
        if problems:
            raise InvalidConfig(problems)

    @property
    def scenario(self):
        return "narrowband" if self.n_subcarriers == 1 else "broadband"

    def dims(self, snr_db):
        return SystemDims(self.n_tx, self.n_rx, self.n_rf, self.n_streams, self.n_subcarriers,
                          noise_var=10.0 ** (-snr_db / 10.0))

    def solver_options(self, algorithm, trial, init=Init.VFD, criterion=None):
        return SolverOptions(
            algorithm=algorithm,
            criterion=criterion or self.criterion,
            init=init,
            outer_tol=self.outer_tol,
            outer_cap=self.outer_cap,
            mo=MOOptions(rel_tol=self.inner_tol, grad_tol=self.grad_tol, max_iters=self.inner_cap),
            power_iters=self.power_iters,
            seed=_derived_seed(self.seed, trial, 2),
        )

    def channel(self, trial):
        return random_channel(make_rng(self.seed, trial), self.n_tx, self.n_rx, self.n_subcarriers,
                              self.num_clusters, self.rays_per_cluster, self.angular_spread)


def config_errors(cfg):
    """All constraint violations of ``cfg`` as ``(message, keys)`` pairs."""
    errs = []
    for key in ("n_tx", "n_rx", "n_rf", "n_streams", "n_subcarriers", "num_clusters", "rays_per_cluster",
                "trials", "symbols", "outer_cap", "inner_cap", "power_iters"):
        if getattr(cfg, key) < 1:
            errs.append((f"{key} must be a positive integer", (key,)))
    if cfg.n_rf < cfg.n_streams:
        errs.append(("n_rf must be >= n_streams", ("n_rf", "n_streams")))
    if cfg.n_rf > min(cfg.n_tx, cfg.n_rx):
        errs.append(("n_rf must be <= min(n_tx, n_rx)", ("n_rf", "n_tx", "n_rx")))
    if cfg.angular_spread < 0:
        errs.append(("angular_spread must be non-negative", ("angular_spread",)))
    if not cfg.snr_db:
        errs.append(("snr_db must list at least one value", ("snr_db",)))
    if not cfg.algorithms:
        errs.append(("algorithms must list at least one algorithm", ("algorithms",)))
    if "gevd" in cfg.algorithms and cfg.n_subcarriers != 1:
        errs.append((f"GEVD requires narrowband: algorithm = gevd conflicts with n_subcarriers = "
                     f"{cfg.n_subcarriers}", ("algorithms", "n_subcarriers")))
    if "evd_ub" in cfg.algorithms and cfg.criterion == "wmmse":
        errs.append(("EVD_UB has no weighted form: algorithm = evd_ub conflicts with criterion = wmmse",
                     ("algorithms", "criterion")))
    for key in ("outer_tol", "inner_tol", "grad_tol"):
        if not getattr(cfg, key) > 0:
            errs.append((f"{key} must be positive", (key,)))
    if any(q < 1 for q in cfg.quant_bits):
        errs.append(("quant_bits entries must be positive integers", ("quant_bits",)))
    return errs


@dataclass(frozen=True)
class SweepRecord:
    algorithm: str
    criterion: str
    scenario: str
    snr_db: float
    metric: str
    value: float
    stderr: float
    trials: int
    seed: int
    quant_bits: int | None = None

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.metric == "ber" and not 0.0 <= self.value <= 1.0:
            raise ValueError("ber must lie in [0, 1]")
        if self.metric in ("mse", "se") and self.value < 0:
            raise ValueError(f"{self.metric} must be non-negative")


@dataclass
class LinkStats:
    bit_errors: int
    bits: int
    mse: float  # empirical, per subcarrier
    mse_stderr: float

    @property
    def ber(self):
        return self.bit_errors / self.bits


def _derived_seed(*parts):
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def qpsk_modulate(bits):
    """Gray-mapped QPSK: bit pair ``(b1, b0)`` maps to ``((1-2b1) + j(1-2b0))/sqrt(2)``.

    ``bits`` has an even-length last axis; the result has half that length.
    """
    bits = np.asarray(bits)
    if bits.shape[-1] % 2:
        raise ValueError("need an even number of bits")
    b1 = bits[..., 0::2]
    b0 = bits[..., 1::2]
    return ((1 - 2 * b1) + 1j * (1 - 2 * b0)) / np.sqrt(2)


def qpsk_demodulate(symbols):
    """Sign slicer; a zero real or imaginary part decodes to bit 0."""
    symbols = np.asarray(symbols)
    out = np.empty(symbols.shape[:-1] + (2 * symbols.shape[-1],), dtype=np.int8)
    out[..., 0::2] = symbols.real < 0
    out[..., 1::2] = symbols.imag < 0
    return out


def run_link_trial(channels, trx, noise_var, n_symbols, rng):
    """Send ``n_symbols`` QPSK vectors per subcarrier through ``W^H (H V s + u)``.

    Returns bit errors, bits sent and the empirical MSE of ``y / beta``
    against ``s`` (summed over streams, averaged over symbols and
    subcarriers) with its standard error.
    """
    h, v, w = _stack(channels), _stack(trx.v), _stack(trx.w)
    n, n_rx, _ = h.shape
    ns = v.shape[2]
    beta = np.broadcast_to(np.asarray(trx.beta, dtype=float), (n,))
    bits = rng.integers(0, 2, size=(n, n_symbols, 2 * ns), dtype=np.int8)
    s = np.swapaxes(qpsk_modulate(bits), 1, 2)  # (N, Ns, n_sym)
    noise = np.sqrt(noise_var / 2) * (rng.standard_normal((n, n_rx, n_symbols))
                                      + 1j * rng.standard_normal((n, n_rx, n_symbols)))
    wh = np.conj(np.swapaxes(w, 1, 2))
    est = (wh @ (h @ (v @ s) + noise)) / beta[:, None, None]
    err = np.sum(np.abs(est - s) ** 2, axis=1)  # (N, n_sym)
    per_symbol = err.mean(axis=0)
    errors = int(np.count_nonzero(qpsk_demodulate(np.swapaxes(est, 1, 2)) != bits))
    mse_se = float(per_symbol.std(ddof=1) / np.sqrt(n_symbols)) if n_symbols > 1 else float("nan")
    return LinkStats(errors, bits.size, float(per_symbol.mean()), mse_se)


def analytic_mse(channels, trx, noise_var):
    """Modified MSE averaged over subcarriers."""
    h = _stack(channels)
    return sum_mse(h, trx, noise_var) / h.shape[0]


def evaluate(channels, trx, noise_var, n_symbols, rng):
    """``{'mse', 'ber', 'se'}`` for one transceiver plus the link statistics."""
    link = run_link_trial(channels, trx, noise_var, n_symbols, rng)
    metrics = {
        "mse": analytic_mse(channels, trx, noise_var),
        "ber": link.ber,
        "se": range_spectral_efficiency(channels, trx, noise_var),
    }
    return metrics, link


def _symbol_rng(cfg, trial, snr_index):
    return make_rng(_derived_seed(cfg.seed, trial, 3), snr_index)


def _sweep_trial(cfg, trial):
    """Metrics for every (algorithm, SNR) of one trial: ``{(alg, snr_idx): metrics}``."""
    ch = cfg.channel(trial)
    out = {}
    for alg in cfg.algorithms:
        for i, snr in enumerate(cfg.snr_db):
            dims = cfg.dims(snr)
            res = solve(ch, dims, cfg.solver_options(alg, trial))
            out[(alg, i)], link = evaluate(ch.per_subcarrier, res.transceiver, dims.noise_var, cfg.symbols,
                                           _symbol_rng(cfg, trial, i))
            out[(alg, i)]["mse_emp"] = (link.mse, link.mse_stderr)
    return out


def thread_count():
    """Worker processes allowed by ``HBF_THREADS`` (default 1)."""
    raw = os.environ.get("HBF_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        log.warning("ignoring non-integer HBF_THREADS=%r", raw)
        return 1


def _map_trials(fn, cfg, extra=()):
    """Run ``fn(cfg, trial, *extra)`` for every trial, in trial order."""
    workers = min(thread_count(), cfg.trials)
    args = [(cfg, t, *extra) for t in range(cfg.trials)]
    if workers == 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*args)))


def _mean_stderr(values):
    values = np.asarray(values, dtype=float)
    mean = math.fsum(values) / values.size
    if values.size < 2:
        return mean, 0.0
    var = math.fsum((values - mean) ** 2) / (values.size - 1)
    return mean, math.sqrt(var / values.size)


def sweep_trials(cfg):
    """Per-trial metrics, one dict per trial keyed by ``(algorithm, snr_index)``.

    Each value holds ``mse``, ``ber``, ``se`` and ``mse_emp``, the empirical
    MSE of the link simulation with its standard error.
    """
    return _map_trials(_sweep_trial, cfg)


def aggregate_sweep(cfg, per_trial):
    """Mean and standard error over trials for every (algorithm, SNR, metric)."""
    records = []
    for alg in cfg.algorithms:
        for i, snr in enumerate(cfg.snr_db):
            for metric in METRICS:
                mean, se = _mean_stderr([t[(alg, i)][metric] for t in per_trial])
                records.append(SweepRecord(alg, cfg.criterion, cfg.scenario, snr, metric, mean, se, cfg.trials,
                                           cfg.seed))
    return records


def run_sweep(cfg, path=None):
    """One record per (algorithm, SNR, metric); written to ``path`` as CSV when given."""
    records = aggregate_sweep(cfg, sweep_trials(cfg))
    if path is not None:
        write_records(path, records)
    return records


def empirical_mse_rows(cfg, per_trial):
    """``(trial, algorithm, snr_db, empirical, its stderr, analytic)`` for every solver output."""
    rows = []
    for trial, res in enumerate(per_trial):
        for (alg, i), m in res.items():
            emp, se = m["mse_emp"]
            rows.append((trial, alg, cfg.snr_db[i], emp, se, m["mse"]))
    return rows


def empirical_mse_check(cfg):
    """Run the sweep trials and return :func:`empirical_mse_rows`."""
    return empirical_mse_rows(cfg, sweep_trials(cfg))


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return "none" if x is None else str(x)


def write_records(path, records, quantized=False):
    cols = QUANT_COLUMNS if quantized else SWEEP_COLUMNS
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(cols)
            for rec in records:
                row = asdict(rec)
                out.writerow([_fmt(row[c]) for c in cols])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def read_records(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    recs = []
    for r in rows:
        q = r.get("quant_bits")
        recs.append(SweepRecord(r["algorithm"], r["criterion"], r["scenario"], float(r["snr_db"]), r["metric"],
                                float(r["value"]), float(r["stderr"]), int(r["trials"]), int(r["seed"]),
                                None if q in (None, "none") else int(q)))
    return recs


def lookup(records, algorithm, metric, snr_db=None, quant_bits="any"):
    """Records matching the filters, in file order."""
    out = []
    for r in records:
        if r.algorithm != algorithm or r.metric != metric:
            continue
        if snr_db is not None and r.snr_db != snr_db:
            continue
        if quant_bits != "any" and r.quant_bits != quant_bits:
            continue
        out.append(r)
    return out


# convergence study


@dataclass
class ConvergenceCurve:
    algorithm: str
    init: str
    objective: np.ndarray  # (trials, outer_cap), padded with each trial's final value
    iterations: np.ndarray  # outer iterations to convergence per trial
    to_one_percent: np.ndarray  # outer iterations to reach 1% of the returned objective

    def mean_curve(self):
        return self.objective.mean(axis=0)


def iterations_to_tolerance(objective, final, rel=0.01):
    """First 1-based iteration whose objective is within ``rel`` of ``final``."""
    obj = np.asarray(objective)
    hit = np.nonzero(obj - final <= rel * abs(final))[0]
    return int(hit[0]) + 1 if hit.size else len(obj)


def _converge_trial(cfg, trial):
    ch = cfg.channel(trial)
    dims = cfg.dims(cfg.snr_db[0])
    out = {}
    for alg in cfg.algorithms:
        for init in cfg.inits:
            res = solve(ch, dims, cfg.solver_options(alg, trial, init=init))
            obj = res.trace.objective
            final = obj[res.trace.best_iteration - 1]
            curve = np.full(cfg.outer_cap, obj[-1])
            curve[: len(obj)] = obj
            out[(alg, init)] = (curve, len(obj), iterations_to_tolerance(obj, final))
    return out


def run_convergence_study(cfg, path=None):
    """Per-iteration mean objective for every (algorithm, init), at ``snr_db[0]``.

    Traces shorter than ``outer_cap`` are padded with their final value.
    Writes the mean curves to ``path`` and iteration statistics to
    ``<path stem>_summary.csv`` when ``path`` is given.
    """
    per_trial = _map_trials(_converge_trial, cfg)
    curves = []
    for alg in cfg.algorithms:
        for init in cfg.inits:
            rows = [t[(alg, init)] for t in per_trial]
            curves.append(ConvergenceCurve(alg, init, np.array([r[0] for r in rows]),
                                           np.array([r[1] for r in rows]), np.array([r[2] for r in rows])))
    if path is not None:
        _write_convergence(path, cfg, curves)
    return curves


def _write_convergence(path, cfg, curves):
    stem, _ = os.path.splitext(path)
    common = (cfg.criterion, cfg.scenario)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(CONVERGE_COLUMNS)
        for c in curves:
            longest = int(c.iterations.max())
            for it in range(longest):
                mean, se = _mean_stderr(c.objective[:, it])
                out.writerow([c.algorithm, *common, c.init, it + 1, repr(mean), repr(se), cfg.trials, cfg.seed])
    with open(stem + "_summary.csv", "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(CONVERGE_SUMMARY_COLUMNS)
        for c in curves:
            for stat, vals in (("iterations", c.iterations), ("iterations_to_1pct", c.to_one_percent)):
                mean, se = _mean_stderr(vals)
                out.writerow([c.algorithm, *common, c.init, stat, repr(mean), repr(se), cfg.trials, cfg.seed])


# quantization study


def _quant_trial(cfg, trial):
    ch = cfg.channel(trial)
    out = {}
    for alg in cfg.algorithms:
        for i, snr in enumerate(cfg.snr_db):
            dims = cfg.dims(snr)
            res = solve(ch, dims, cfg.solver_options(alg, trial))
            lam = None if res.weights is None else res.weights.lam
            variants = [(None, res.transceiver)]
            for q in cfg.quant_bits:
                if res.beamformer is None:
                    variants.append((q, res.transceiver))
                else:
                    bf = quantize_phases(res.beamformer, q, ch.per_subcarrier, dims.noise_var, lam)
                    variants.append((q, bf.overall()))
            for q, trx in variants:
                # same symbols and noise for every resolution
                out[(alg, i, q)], _ = evaluate(ch.per_subcarrier, trx, dims.noise_var, cfg.symbols,
                                               _symbol_rng(cfg, trial, i))
    return out


def run_quantization_study(cfg, path=None):
    """Metrics of each solution before and after phase quantization to each of
    ``cfg.quant_bits``; unquantized rows carry ``quant_bits = None``."""
    per_trial = _map_trials(_quant_trial, cfg)
    records = []
    for alg in cfg.algorithms:
        for i, snr in enumerate(cfg.snr_db):
            for q in (None, *cfg.quant_bits):
                for metric in METRICS:
                    mean, se = _mean_stderr([t[(alg, i, q)][metric] for t in per_trial])
                    records.append(SweepRecord(alg, cfg.criterion, cfg.scenario, snr, metric, mean, se,
                                               cfg.trials, cfg.seed, q))
    if path is not None:
        write_records(path, records, quantized=True)
    return records


def paired_quantization_degradation(cfg, q):
    """Per-trial BER differences (quantized minus unquantized), averaged over SNRs."""
    diffs = []
    for t in _map_trials(_quant_trial, cfg):
        d = [t[(alg, i, q)]["ber"] - t[(alg, i, None)]["ber"]
             for alg in cfg.algorithms for i in range(len(cfg.snr_db))]
        diffs.append(np.mean(d))
    return np.array(diffs)


def ber_crossing(snrs, bers, target=1e-2):
    """SNR (dB) where the BER curve crosses ``target``, by linear interpolation
    of ``log10(BER)``; ``nan`` when it never does."""
    snrs = np.asarray(snrs, dtype=float)
    logb = np.log10(np.maximum(np.asarray(bers, dtype=float), 1e-300))
    lt = np.log10(target)
    for j in range(len(snrs) - 1):
        a, b = logb[j], logb[j + 1]
        if (a - lt) * (b - lt) <= 0 and a != b:
            return float(snrs[j] + (lt - a) * (snrs[j + 1] - snrs[j]) / (b - a))
    return float("nan")


def plot_records(records, path, metric="ber"):
    """Line chart of ``metric`` against SNR, one line per algorithm."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    for alg in dict.fromkeys(r.algorithm for r in records):
        rows = [r for r in records if r.algorithm == alg and r.metric == metric and r.quant_bits is None]
        if not rows:
            continue
        ax.errorbar([r.snr_db for r in rows], [r.value for r in rows], yerr=[r.stderr for r in rows],
                    marker="o", label=alg)
    if metric == "ber":
        ax.set_yscale("log")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel(metric.upper())
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
