"""Monte Carlo simulation of the stochastic closed loop.

``simulate_run`` executes the true event-driven semantics: sample an
interval and a delay, schedule a node, quantize, deliver (or drop) the
packet at the arrival instant, and propagate plant and controller
exactly with two matrix-exponential segments per interval.  No ODE
integrator is involved anywhere.

Ensembles of independent runs feed the empirical checks against a
solved certificate: the exponential mean-square bound, the performance
partial-sum inequality, and the quantizer-induced ultimate bound.

All randomness is counter based.  Stream s of run seed q at step k reads
from a Philox generator with key (q, s) and counter block k, so every
sampled quantity is a pure function of (seed, stream, k) regardless of
platform or execution order.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, HorizonTooShortError
from .lmi import LmiCertificate
from .linalg import matexp, matexp_integral
from .model import (
    ControllerModel,
    NetworkConfig,
    PlantModel,
    QuantizerConfig,
    build_realization,
    quantize,
    schedule_node,
    system_dims,
    update_received,
    update_zoom,
)

__all__ = [
    "STREAM_TIMING",
    "STREAM_DROPOUT",
    "STREAM_DITHER",
    "SimulationRun",
    "EnsembleStatistics",
    "simulate_run",
    "run_ensemble",
    "replay_residuals",
    "check_emsiss_bound",
    "check_hinf_sum",
    "ultimate_bound_check",
    "write_trace_csv",
]

STREAM_TIMING = 0
STREAM_DROPOUT = 1
STREAM_DITHER = 2  # reserved for dithered quantizers


def _stream_rng(seed: int, stream: int, k: int) -> np.random.Generator:
    """Generator for one (seed, stream, step) cell of the counter space."""
    bits = np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, stream], counter=[0, 0, k, 0])
    return np.random.Generator(bits)


@dataclass(frozen=True)
class SimulationRun:
    """One trajectory of the closed loop at transmission instants.

    Arrays are indexed by step k = 0..horizon; the sampled quantities
    (h, tau, sigma, alpha, beta) of the final row are those drawn at the
    last recorded instant even though no further propagation happens.
    """

    seed: int
    horizon: int
    x0: np.ndarray
    times: np.ndarray
    intervals: np.ndarray
    delays: np.ndarray
    nodes: np.ndarray
    alphas: np.ndarray
    betas: np.ndarray
    states: np.ndarray  # augmented state (x_p, x_c, e_y, e_u) per step
    quant_errors: np.ndarray  # (eps_y, eps_u) per step
    outputs: np.ndarray  # (y, u) per step
    mus: np.ndarray  # per-node quantization parameter per step
    saturated: np.ndarray  # any node saturated at this step

    @property
    def norm2_x(self) -> np.ndarray:
        return np.sum(self.states**2, axis=1)

    @property
    def norm2_eps(self) -> np.ndarray:
        return np.sum(self.quant_errors**2, axis=1)

    @property
    def norm2_z(self) -> np.ndarray:
        return np.sum(self.outputs**2, axis=1)


@dataclass(frozen=True)
class EnsembleStatistics:
    """Per-step averages over independent runs with normal-approximation
    confidence half-widths."""

    runs: int
    horizon: int
    x0: np.ndarray
    mean_sq_state: np.ndarray
    mean_sq_eps: np.ndarray
    mean_sq_output: np.ndarray
    half_state: np.ndarray  # confidence half-width of mean_sq_state
    sup_sq_eps: np.ndarray  # running sup over steps < k, worst run
    sum_sq_eps_mean: float
    sum_sq_output_mean: float
    sum_sq_output_half: float
    alpha_freq: float
    beta_freq: float
    mu_final_mean: np.ndarray
    confidence: float


@dataclass(frozen=True)
class BoundReport:
    """Outcome of one empirical certificate check."""

    name: str
    passed: bool
    margins: np.ndarray
    violations: list[int]
    detail: dict = field(default_factory=dict)


def _segment(plant: PlantModel, ctrl: ControllerModel, dt: float,
             x_p: np.ndarray, x_c: np.ndarray,
             y_hat: np.ndarray, u_hat: np.ndarray):
    """Exact ZOH propagation of both states over dt with held inputs."""
    if dt == 0.0:
        return x_p, x_c
    x_p = matexp(plant.a, dt) @ x_p + matexp_integral(plant.a, dt) @ (plant.b @ u_hat)
    x_c = matexp(ctrl.a, dt) @ x_c + matexp_integral(ctrl.a, dt) @ (ctrl.b @ y_hat)
    return x_p, x_c


def simulate_run(
    plant: PlantModel,
    controller: ControllerModel,
    net: NetworkConfig,
    quantizer: QuantizerConfig,
    x0: np.ndarray,
    horizon: int,
    seed: int,
) -> SimulationRun:
    """Simulate `horizon` transmission intervals from the augmented state x0.

    x0 stacks (x_p, x_c, e_y, e_u); the held values are reconstructed
    from the error components.  Saturation and out-of-range states are
    flagged in the trace, never raised.
    """
    dims = system_dims(plant, controller)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (dims.n_x,):
        raise DimensionError(f"initial state must have length {dims.n_x}, got {x0.shape}")
    if horizon < 1:
        raise DomainError("horizon must be at least one step")
    if quantizer.nodes != net.node_count:
        raise DimensionError("quantizer node count must match the network")
    L = net.node_count
    y_nodes = net.y_node_indices()
    u_nodes = [np.flatnonzero(g == 1.0) for g in net.gamma_u]

    x_p = x0[: dims.n_p].copy()
    x_c = x0[dims.n_p : dims.n_pc].copy()
    e_y0 = x0[dims.n_pc : dims.n_pc + dims.n_y]
    e_u0 = x0[dims.n_pc + dims.n_y :]
    y = plant.c @ x_p
    y_hat = y + e_y0
    u = controller.c @ x_c + controller.d @ y_hat
    u_hat = u + e_u0
    mu = quantizer.mu0.copy()
    t = 0.0

    K = horizon
    times = np.empty(K + 1)
    intervals = np.empty(K + 1)
    delays = np.empty(K + 1)
    node_seq = np.empty(K + 1, dtype=int)
    alphas = np.empty(K + 1, dtype=int)
    betas = np.empty(K + 1, dtype=int)
    states = np.empty((K + 1, dims.n_x))
    quant_errors = np.empty((K + 1, dims.n_z))
    outputs = np.empty((K + 1, dims.n_z))
    mus = np.empty((K + 1, L))
    sat_flags = np.zeros(K + 1, dtype=bool)

    for k in range(K + 1):
        y = plant.c @ x_p
        u = controller.c @ x_c + controller.d @ y_hat
        e_y = y_hat - y
        e_u = u_hat - u
        _, eps_y, sat_y = quantize(quantizer, mu, y, y_nodes)
        if net.u_direct:
            # the control input bypasses the network unquantized
            eps_u = np.zeros(dims.n_u)
            sat_u = np.zeros(L, dtype=bool)
        else:
            _, eps_u, sat_u = quantize(quantizer, mu, u, u_nodes)

        x_bar = np.concatenate([x_p, x_c, e_y, e_u])
        eps_bar = np.concatenate([eps_y, eps_u])
        e_vec = np.concatenate([e_y, e_u])
        sigma = schedule_node(net.protocol, L, k, x_bar=x_bar, eps_bar=eps_bar,
                              e_vec=e_vec, net=net)

        h, tau = net.distribution.sample(_stream_rng(seed, STREAM_TIMING, k), 1)[0]
        drop = _stream_rng(seed, STREAM_DROPOUT, k)
        alpha = int(drop.random() < net.alpha_bar)
        beta = int(drop.random() < net.beta_bar)

        times[k] = t
        intervals[k] = h
        delays[k] = tau
        node_seq[k] = sigma
        alphas[k] = alpha
        betas[k] = beta
        states[k] = x_bar
        quant_errors[k] = eps_bar
        outputs[k] = np.concatenate([y, u])
        mus[k] = mu
        sat_flags[k] = bool(np.any(sat_y) or np.any(sat_u))
        if k == K:
            break

        # fresh packet contents: quantized values sampled at t_k
        y_fresh = y + eps_y
        u_fresh = u + eps_u

        # hold until the arrival instant, deliver, hold until the next sample
        x_p, x_c = _segment(plant, controller, tau, x_p, x_c, y_hat, u_hat)
        y_hat = update_received(y_hat, y_fresh, net.gamma_y[sigma - 1], alpha)
        u_hat = update_received(u_hat, u_fresh, net.gamma_u[sigma - 1], beta)
        mu = update_zoom(mu, alpha, beta, quantizer)
        x_p, x_c = _segment(plant, controller, h - tau, x_p, x_c, y_hat, u_hat)
        t += h

    return SimulationRun(
        seed=seed, horizon=K, x0=x0, times=times, intervals=intervals,
        delays=delays, nodes=node_seq, alphas=alphas, betas=betas,
        states=states, quant_errors=quant_errors, outputs=outputs,
        mus=mus, saturated=sat_flags,
    )


def replay_residuals(
    run: SimulationRun,
    plant: PlantModel,
    controller: ControllerModel,
    net: NetworkConfig,
) -> np.ndarray:
    """Per-step residual between the recorded trajectory and the exact
    one-step recursion rebuilt from the realized (node, interval, delay,
    dropout) tuple.  Near machine precision when the simulator is sound."""
    dims = system_dims(plant, controller)
    res = np.empty(run.horizon)
    for k in range(run.horizon):
        real = build_realization(plant, controller, net, int(run.nodes[k]),
                                 float(run.intervals[k]), float(run.delays[k]))
        x = run.states[k]
        eps = run.quant_errors[k]
        e_vec = x[dims.n_pc :]
        pred = (
            real.a_mat @ x
            + real.b_mat @ (real.mean_diag * eps)
            + real.step_matrix(float(run.alphas[k]), float(run.betas[k])) @ (eps - e_vec)
        )
        res[k] = float(np.linalg.norm(pred - run.states[k + 1]))
    return res


def _z_value(confidence: float) -> float:
    from scipy.stats import norm

    return float(norm.ppf(0.5 * (1.0 + confidence)))


def _simulate_for(args) -> SimulationRun:
    plant, controller, net, quantizer, x0, horizon, seed = args
    return simulate_run(plant, controller, net, quantizer, x0, horizon, seed)


def run_ensemble(
    plant: PlantModel,
    controller: ControllerModel,
    net: NetworkConfig,
    quantizer: QuantizerConfig,
    x0: np.ndarray,
    runs: int,
    horizon: int,
    seed_base: int,
    confidence: float = 0.99,
    workers: int = 1,
) -> EnsembleStatistics:
    """Average `runs` independent trajectories; run r uses seed_base + r.

    Aggregation walks runs in seed order, so the result is independent of
    worker scheduling.
    """
    if runs < 1:
        raise DomainError("need at least one run")
    jobs = [(plant, controller, net, quantizer, x0, horizon, seed_base + r)
            for r in range(runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_for, jobs))
    else:
        results = [_simulate_for(j) for j in jobs]

    sq_state = np.vstack([r.norm2_x for r in results])
    sq_eps = np.vstack([r.norm2_eps for r in results])
    sq_out = np.vstack([r.norm2_z for r in results])
    mean_state = np.mean(sq_state, axis=0)
    z = _z_value(confidence) if runs >= 30 else 0.0
    half_state = z * np.std(sq_state, axis=0, ddof=1) / np.sqrt(runs) if runs > 1 else np.zeros_like(mean_state)

    # sup over steps i < k of the worst squared input across runs
    worst_eps = np.max(sq_eps, axis=0)
    sup_sq_eps = np.concatenate([[0.0], np.maximum.accumulate(worst_eps[:-1])])

    sums_out = np.sum(sq_out, axis=1)
    sum_out_mean = float(np.mean(sums_out))
    sum_out_half = z * float(np.std(sums_out, ddof=1)) / np.sqrt(runs) if runs > 1 else 0.0

    alpha_freq = float(np.mean([r.alphas[: r.horizon] for r in results]))
    beta_freq = float(np.mean([r.betas[: r.horizon] for r in results]))

    return EnsembleStatistics(
        runs=runs,
        horizon=horizon,
        x0=np.asarray(x0, dtype=float),
        mean_sq_state=mean_state,
        mean_sq_eps=np.mean(sq_eps, axis=0),
        mean_sq_output=np.mean(sq_out, axis=0),
        half_state=half_state,
        sup_sq_eps=sup_sq_eps,
        sum_sq_eps_mean=float(np.mean(np.sum(sq_eps, axis=1))),
        sum_sq_output_mean=sum_out_mean,
        sum_sq_output_half=sum_out_half,
        alpha_freq=alpha_freq,
        beta_freq=beta_freq,
        mu_final_mean=np.mean(np.vstack([r.mus[-1] for r in results]), axis=0),
        confidence=confidence,
    )


def check_emsiss_bound(
    stats: EnsembleStatistics, cert: LmiCertificate, x0: np.ndarray
) -> BoundReport:
    """Exponential mean-square bound check at every recorded step.

    The bound at step k is c1 ||x0||^2 exp(-c2 k) plus gamma1 times the
    running sup of the squared quantization input; the estimate must stay
    below it by at least its confidence half-width.
    """
    x0 = np.asarray(x0, dtype=float)
    k = np.arange(stats.horizon + 1)
    bound = cert.c1 * float(x0 @ x0) * np.exp(-cert.c2 * k) + cert.gamma1 * stats.sup_sq_eps
    margins = bound - (stats.mean_sq_state + stats.half_state)
    violations = [int(i) for i in np.flatnonzero(margins < 0.0)]
    return BoundReport(
        name="emsiss",
        passed=not violations,
        margins=margins,
        violations=violations,
        detail={"bound": bound, "estimate": stats.mean_sq_state},
    )


def check_hinf_sum(
    stats: EnsembleStatistics, cert: LmiCertificate, x0: np.ndarray,
    tail_fraction: float = 0.01,
) -> BoundReport:
    """Partial-sum performance inequality over the whole horizon.

    Compares the summed mean squared output against
    c3 ||x0||^2 + gamma2 * (summed squared input).  Requires the decay
    tail beyond the horizon, extrapolated from c2, to be negligible.
    """
    if not np.isfinite(cert.gamma2):
        raise DomainError("performance check needs a certificate with a finite gain")
    x0 = np.asarray(x0, dtype=float)
    lhs = stats.sum_sq_output_mean + stats.sum_sq_output_half
    rhs = cert.c3 * float(x0 @ x0) + cert.gamma2 * stats.sum_sq_eps_mean
    decay = np.exp(-cert.c2)
    tail = float(stats.mean_sq_output[-1]) * decay / max(1.0 - decay, 1e-300)
    if lhs > 0.0 and tail > tail_fraction * lhs:
        raise HorizonTooShortError(
            f"estimated output tail {tail:.3g} exceeds {tail_fraction:.0%} of the partial sum"
        )
    margin = rhs - lhs
    ratio = lhs / rhs if rhs > 0.0 else 0.0
    return BoundReport(
        name="hinf_sum",
        passed=margin >= 0.0,
        margins=np.array([margin]),
        violations=[] if margin >= 0.0 else [0],
        detail={"lhs": lhs, "rhs": rhs, "ratio": ratio, "tail": tail},
    )


def ultimate_bound_check(
    stats: EnsembleStatistics,
    cert: LmiCertificate,
    quantizer: QuantizerConfig,
    window_fraction: float = 0.2,
) -> BoundReport:
    """Tail mean-square state against the quantizer-induced ultimate bound.

    The squared input never exceeds ||diag(error bounds) mu||^2 and mu is
    non-increasing, so the tail of the state satisfies the gain bound
    evaluated at the initial quantization parameters.
    """
    bound = cert.gamma1 * float(np.sum((quantizer.error_bound * quantizer.mu0) ** 2))
    window = max(int(window_fraction * (stats.horizon + 1)), 1)
    tail_est = float(np.mean(stats.mean_sq_state[-window:]))
    margin = bound - tail_est
    return BoundReport(
        name="ultimate_bound",
        passed=margin >= 0.0,
        margins=np.array([margin]),
        violations=[] if margin >= 0.0 else [0],
        detail={"bound": bound, "tail_estimate": tail_est, "window": window},
    )


def write_trace_csv(run: SimulationRun, path) -> None:
    """Export one run, one row per step, 17 significant digits."""
    L = run.mus.shape[1]
    header = (
        ["k", "t", "h", "tau", "sigma", "alpha", "beta",
         "norm2_x", "norm2_eps", "norm2_z"]
        + [f"mu_{j + 1}" for j in range(L)]
        + ["saturated"]
    )
    n2x, n2e, n2z = run.norm2_x, run.norm2_eps, run.norm2_z
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(run.horizon + 1):
            row = [
                str(k),
                f"{run.times[k]:.17g}",
                f"{run.intervals[k]:.17g}",
                f"{run.delays[k]:.17g}",
                str(int(run.nodes[k])),
                str(int(run.alphas[k])),
                str(int(run.betas[k])),
                f"{n2x[k]:.17g}",
                f"{n2e[k]:.17g}",
                f"{n2z[k]:.17g}",
            ]
            row += [f"{run.mus[k, j]:.17g}" for j in range(L)]
            row.append(str(int(run.saturated[k])))
            writer.writerow(row)
