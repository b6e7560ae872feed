"""Dense semidefinite feasibility solver for small affine systems.

Phase-1 style: a short smoothed maximum-eigenvalue descent (softmax
temperature schedule, quasi-Newton steps, exact eigendecomposition
gradients) finds a reasonable starting region, then a damped Newton
log-det barrier stage follows the central path of

    minimize t  subject to  F_k(x) <= t I  for all k

down to the requested margin.  The Newton stage is what reaches tight
feasible sets whose slack is orders of magnitude below the first-order
plateau.  The solver is deterministic given its seed, and every
accepted answer can be re-checked by an independent eigenvalue pass.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse
import scipy.special

from .errors import DomainError
from .linalg import symmetric_eigen

__all__ = [
    "AffineConstraintSystem",
    "SolveOptions",
    "SolveOutcome",
    "solve_feasibility",
    "verify_outcome",
    "minimize_scalar_objective",
]

STATUS_FEASIBLE = "feasibleWithMargin"
STATUS_MARGIN_TOO_SMALL = "marginTooSmall"
STATUS_NOT_FOUND = "notFoundWithinBudget"


class AffineConstraintSystem:
    """Canonical form of an affine semidefinite feasibility problem.

    Every constraint is normalized to "must be negative semidefinite":
    constraints declared with sense "pos" are negated on ingestion.
    Variables can be pinned to fixed values, which removes them from the
    optimization but keeps the constraint data untouched.
    """

    def __init__(self, constraints, dim: int):
        self.dim = int(dim)
        self.constraints = []
        for c in constraints:
            mat = c.matrix.tocsr()
            if mat.shape != (1 + self.dim, c.dim * c.dim):
                raise DomainError(
                    f"constraint {c.name}: matrix shape {mat.shape} does not match "
                    f"variable dimension {self.dim} and block dimension {c.dim}"
                )
            sign = -1.0 if c.sense == "pos" else 1.0
            self.constraints.append(
                {
                    "name": c.name,
                    "dim": c.dim,
                    "mat": sign * mat,
                    "scale": float(getattr(c, "scale", 1.0)) or 1.0,
                }
            )
        self._check_symmetry()
        self.fixed: dict[int, float] = {}

    def _check_symmetry(self, tol: float = 1e-9):
        probe = np.cos(np.arange(1, self.dim + 1, dtype=float))  # fixed deterministic probe
        v = np.concatenate([[1.0], probe])
        for c in self.constraints:
            f = np.asarray(v @ c["mat"]).reshape(c["dim"], c["dim"])
            if np.linalg.norm(f - f.T) > tol * max(1.0, np.linalg.norm(f)):
                raise DomainError(f"constraint {c['name']} is not symmetric")

    # -- variable pinning ---------------------------------------------------

    def fix_variable(self, idx: int, value: float) -> None:
        if not 0 <= idx < self.dim:
            raise DomainError(f"variable index {idx} out of range")
        self.fixed[idx] = float(value)

    def free_variable(self, idx: int) -> None:
        self.fixed.pop(idx, None)

    def free_indices(self) -> np.ndarray:
        return np.array([i for i in range(self.dim) if i not in self.fixed], dtype=int)

    def full_vector(self, x_free: np.ndarray) -> np.ndarray:
        x = np.zeros(self.dim)
        x[self.free_indices()] = x_free
        for i, v in self.fixed.items():
            x[i] = v
        return x

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, k: int, x: np.ndarray) -> np.ndarray:
        c = self.constraints[k]
        v = np.concatenate([[1.0], x])
        return np.asarray(v @ c["mat"]).reshape(c["dim"], c["dim"])

    def margins(self, x: np.ndarray) -> np.ndarray:
        """Largest eigenvalue of every normalized constraint (negative = satisfied)."""
        out = np.empty(len(self.constraints))
        for k in range(len(self.constraints)):
            f = self.evaluate(k, x)
            f = 0.5 * (f + f.T)
            out[k] = np.linalg.eigvalsh(f)[-1]
        return out

    def worst_margin(self, x: np.ndarray) -> float:
        return float(np.max(self.margins(x)))


@dataclass(frozen=True)
class SolveOptions:
    max_iterations: int = 4000
    requested_margin: float = 1e-8
    seed: int = 0
    temperature_start: float = 1.0
    temperature_end: float = 1e-6
    cooling: float = 0.5
    stage_iterations: int = 120
    warmup_iterations: int = 240  # smoothed-descent budget before the Newton stage
    newton_inner: int = 80
    mu_decrease: float = 0.2
    initial: np.ndarray | None = None
    time_budget_s: float | None = None
    variable_bound: float | None = None  # optional |x_i| box to keep scales tame


@dataclass
class SolveOutcome:
    status: str
    x: np.ndarray
    worst_margin: float
    iterations: int
    wall_time_s: float
    objective_value: float | None = None
    margins: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def feasible(self) -> bool:
        return self.status == STATUS_FEASIBLE


def _smoothed_objective(system: AffineConstraintSystem, free: np.ndarray, temperature: float):
    """Smoothed max-eigenvalue objective with its analytic gradient."""

    def fun(x_free: np.ndarray):
        x = system.full_vector(x_free)
        all_logs = []
        grad = np.zeros(system.dim)
        pieces = []
        for c in system.constraints:
            f = system_eval(c, x)
            w, v = np.linalg.eigh(f)
            pieces.append((c, w / c["scale"], v))
            all_logs.append(w / (c["scale"] * temperature))
        flat = np.concatenate(all_logs)
        lse = scipy.special.logsumexp(flat)
        value = temperature * lse
        # softmax weights over all eigenvalues of all constraints
        for c, wn, v in pieces:
            weights = np.exp(wn / temperature - lse)
            if not np.any(weights > 0.0):
                continue
            g_mat = (v * weights) @ v.T / c["scale"]
            grad += c["mat"].dot(g_mat.ravel())[1:]
        return value, grad[free]

    def system_eval(c, x):
        v = np.concatenate([[1.0], x])
        f = np.asarray(v @ c["mat"]).reshape(c["dim"], c["dim"])
        return 0.5 * (f + f.T)

    return fun


class _BarrierStage:
    """Damped Newton log-det barrier on the phase-1 epigraph problem.

    Works on the scale-normalized constraints G_k(x) = F_k(x)/s_k with
    slack variable t, minimizing t + mu * sum_k (-log det(t I - G_k(x)))
    along a geometric mu schedule.  Because every s_k >= 1, driving t
    below -requestedMargin certifies the original constraints too.
    """

    def __init__(self, system: AffineConstraintSystem, free: np.ndarray):
        self.free = free
        self.blocks = []
        for c in system.constraints:
            mat = (c["mat"] / c["scale"]).tocsr()
            take = np.concatenate([[0], free + 1])
            rows = mat[take]
            fixed_idx = [i for i in range(system.dim) if i not in set(free)]
            if fixed_idx:
                const = mat[0].toarray().ravel()
                for i in fixed_idx:
                    const = const + system.fixed[i] * mat[i + 1].toarray().ravel()
                rows = rows.tolil()
                rows[0] = const
                rows = rows.tocsr()
            support = np.unique(rows[1:].nonzero()[0])
            self.blocks.append((c["dim"], rows, support))
        self.barrier_order = sum(b[0] for b in self.blocks)

    def factors(self, x_free: np.ndarray, t: float):
        """Cholesky factors of every slack matrix, or None when not all PD."""
        v = np.concatenate([[1.0], x_free])
        out = []
        for dim, rows, _ in self.blocks:
            g = (rows.T @ v).reshape(dim, dim)
            s = t * np.eye(dim) - 0.5 * (g + g.T)
            try:
                out.append(scipy.linalg.cholesky(s, lower=True))
            except scipy.linalg.LinAlgError:
                return None
        return out

    def value(self, x_free: np.ndarray, t: float, mu: float, factors) -> float:
        phi = t
        for chol in factors:
            phi -= 2.0 * mu * float(np.sum(np.log(np.diag(chol))))
        return phi

    def newton_system(self, x_free: np.ndarray, t: float, mu: float, factors):
        nf = len(x_free)
        grad = np.zeros(nf + 1)
        hess = np.zeros((nf + 1, nf + 1))
        grad[-1] = 1.0
        for (dim, rows, support), chol in zip(self.blocks, factors):
            eye = np.eye(dim)
            s_inv = scipy.linalg.cho_solve((chol, True), eye)
            s_inv = 0.5 * (s_inv + s_inv.T)
            s_inv2 = s_inv @ s_inv
            grad[-1] -= mu * float(np.trace(s_inv))
            hess[-1, -1] += mu * float(np.trace(s_inv2))
            if len(support) == 0:
                continue
            basis = rows[support + 1]
            mats = basis.toarray().reshape(len(support), dim, dim)
            grad[support] += mu * (basis @ s_inv.ravel())
            cross = -mu * (basis @ s_inv2.ravel())
            hess[support, -1] += cross
            hess[-1, support] += cross
            quad = np.matmul(np.matmul(s_inv, mats), s_inv)
            gram = basis @ quad.reshape(len(support), -1).T
            gram = 0.5 * (gram + gram.T)
            hess[np.ix_(support, support)] += mu * gram
        return grad, hess


def _run_barrier(
    system: AffineConstraintSystem,
    stage: _BarrierStage,
    x_start: np.ndarray,
    options: SolveOptions,
    deadline: float | None,
    iteration_budget: int,
) -> tuple[np.ndarray, float, int]:
    """Follow the central path; returns (best x, its true worst margin, iters)."""
    free = stage.free
    x = x_start[free].astype(float).copy()
    order = max(stage.barrier_order, 1)
    t = 0.0
    factors = None
    # lift t until every slack matrix is safely positive definite
    v = np.concatenate([[1.0], x])
    worst = -np.inf
    for dim, rows, _ in stage.blocks:
        g = (rows.T @ v).reshape(dim, dim)
        worst = max(worst, float(np.linalg.eigvalsh(0.5 * (g + g.T))[-1]))
    t = worst + 0.1 * (1.0 + abs(worst))
    factors = stage.factors(x, t)
    if factors is None:
        t = worst + 1.0 + abs(worst)
        factors = stage.factors(x, t)
    mu = (abs(t) + 1.0) / order
    mu_floor = options.requested_margin / (10.0 * order)
    iters = 0
    best_x = system.full_vector(x)
    best_margin = system.worst_margin(best_x)
    while mu > mu_floor and iters < iteration_budget:
        for _ in range(options.newton_inner):
            if deadline is not None and time.perf_counter() > deadline:
                return best_x, best_margin, iters
            grad, hess = stage.newton_system(x, t, mu, factors)
            diag_scale = max(float(np.max(np.abs(np.diag(hess)))), 1e-300)
            jitter = 0.0
            step = None
            for _ in range(14):
                try:
                    chol = scipy.linalg.cho_factor(
                        hess + jitter * np.eye(hess.shape[0]), lower=True
                    )
                    step = -scipy.linalg.cho_solve(chol, grad)
                    break
                except scipy.linalg.LinAlgError:
                    jitter = max(jitter * 100.0, 1e-14 * diag_scale)
            if step is None:
                return best_x, best_margin, iters
            decrement = -float(grad @ step)
            iters += 1
            # the self-concordant centering measure is decrement / mu; the
            # path point is trustworthy once it drops below ~0.06
            if decrement <= 0.06 * mu:
                break
            phi0 = stage.value(x, t, mu, factors)
            alpha = 1.0
            while alpha > 1e-13:
                x_try = x + alpha * step[:-1]
                t_try = t + alpha * step[-1]
                f_try = stage.factors(x_try, t_try)
                if f_try is not None and stage.value(x_try, t_try, mu, f_try) <= (
                    phi0 - 0.25 * alpha * decrement
                ):
                    x, t, factors = x_try, t_try, f_try
                    break
                alpha *= 0.5
            else:
                break
            if t <= -options.requested_margin:
                cand = system.full_vector(x)
                margin = system.worst_margin(cand)
                if margin < best_margin:
                    best_x, best_margin = cand, margin
                if margin <= -options.requested_margin:
                    return best_x, best_margin, iters
        cand = system.full_vector(x)
        margin = system.worst_margin(cand)
        if margin < best_margin:
            best_x, best_margin = cand, margin
        if margin <= -options.requested_margin:
            return best_x, best_margin, iters
        mu *= options.mu_decrease
    return best_x, best_margin, iters


def solve_feasibility(system: AffineConstraintSystem, options: SolveOptions = SolveOptions()) -> SolveOutcome:
    """Search for a variable assignment making every constraint hold with margin."""
    t0 = time.perf_counter()
    deadline = None if options.time_budget_s is None else t0 + options.time_budget_s
    free = system.free_indices()
    rng = np.random.Generator(np.random.Philox(key=options.seed))
    if options.initial is not None:
        x_free = np.asarray(options.initial, dtype=float)[free]
    else:
        x_free = 1e-3 * rng.standard_normal(len(free))

    best_x = system.full_vector(x_free)
    best_margin = system.worst_margin(best_x)
    total_iters = 0

    bounds = None
    if options.variable_bound is not None:
        bounds = [(-options.variable_bound, options.variable_bound)] * len(free)
        x_free = np.clip(x_free, -options.variable_bound, options.variable_bound)
    temperature = options.temperature_start
    warmup_cap = min(options.warmup_iterations, options.max_iterations)
    while temperature >= options.temperature_end and total_iters < warmup_cap:
        fun = _smoothed_objective(system, free, temperature)
        budget = min(options.stage_iterations, warmup_cap - total_iters)
        res = scipy.optimize.minimize(
            fun,
            x_free,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": budget, "ftol": 1e-14, "gtol": 1e-12},
        )
        x_free = res.x
        total_iters += int(res.nit) + 1
        x_full = system.full_vector(x_free)
        margin = system.worst_margin(x_full)
        if margin < best_margin:
            best_margin = margin
            best_x = x_full
        if margin <= -options.requested_margin:
            return SolveOutcome(
                status=STATUS_FEASIBLE,
                x=x_full,
                worst_margin=margin,
                iterations=total_iters,
                wall_time_s=time.perf_counter() - t0,
                margins=system.margins(x_full),
            )
        if deadline is not None and time.perf_counter() > deadline:
            break
        temperature *= options.cooling

    if (deadline is None or time.perf_counter() < deadline) and total_iters < options.max_iterations:
        stage = _BarrierStage(system, free)
        bx, bm, used = _run_barrier(
            system, stage, best_x, options, deadline,
            options.max_iterations - total_iters,
        )
        total_iters += used
        if bm < best_margin:
            best_x, best_margin = bx, bm

    if best_margin <= -options.requested_margin:
        status = STATUS_FEASIBLE
    elif best_margin < 0.0:
        status = STATUS_MARGIN_TOO_SMALL
    else:
        status = STATUS_NOT_FOUND
    return SolveOutcome(
        status=status,
        x=best_x,
        worst_margin=best_margin,
        iterations=total_iters,
        wall_time_s=time.perf_counter() - t0,
        margins=system.margins(best_x),
    )


def verify_outcome(
    system: AffineConstraintSystem, x: np.ndarray, requested_margin: float
) -> tuple[bool, float]:
    """Independent eigenvalue re-check of a claimed feasible point."""
    worst = -np.inf
    for k, c in enumerate(system.constraints):
        f = system.evaluate(k, x)
        f = 0.5 * (f + f.T)
        w, _ = symmetric_eigen(f)
        worst = max(worst, float(w[-1]))
    return worst <= -requested_margin + 1e-9, worst


def minimize_scalar_objective(
    system: AffineConstraintSystem,
    objective_index: int,
    lower: float,
    upper: float,
    options: SolveOptions = SolveOptions(),
    bisect_tol: float = 1e-2,
) -> SolveOutcome:
    """Smallest value of one variable keeping the system feasible.

    Bisection over [lower, upper]; each probe fixes the variable and
    runs the feasibility solver, warm-started from the last feasible
    point.  Reports the best feasible value, or the infeasible outcome
    at the upper bracket.
    """
    system.fix_variable(objective_index, upper)
    out = solve_feasibility(system, options)
    if not out.feasible:
        system.free_variable(objective_index)
        out.objective_value = None
        return out
    best = out
    best_value = upper
    lo, hi = lower, upper
    warm = out.x
    while hi - lo > bisect_tol * max(abs(hi), 1.0):
        mid = 0.5 * (lo + hi)
        system.fix_variable(objective_index, mid)
        probe = solve_feasibility(
            system,
            SolveOptions(
                **{
                    **options.__dict__,
                    "initial": warm,
                }
            ),
        )
        if probe.feasible:
            best, best_value, hi, warm = probe, mid, mid, probe.x
        else:
            lo = mid
    system.free_variable(objective_index)
    best.objective_value = best_value
    return best
