"""Continuous-time loop description and its exact discretization.

The closed loop consists of a linear plant, a linear controller, and a
shared network with L nodes.  At each transmission instant a scheduled
node sends its quantized measurement; the packet arrives after a delay
and may be dropped.  Between events everything runs in zero-order hold.

``build_realization`` produces the exact one-step transition matrices of
the augmented state (plant state, controller state, held-value errors)
for a given node, interval and delay.  The stochastic packet outcomes
enter the recursion through a diagonal mean/fluctuation split of the
Bernoulli indicators, which is what the analysis modules consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, DomainError
from .linalg import matexp, matexp_integral

__all__ = [
    "PlantModel",
    "ControllerModel",
    "TimingRegion",
    "QuantizerConfig",
    "ProtocolSpec",
    "NetworkConfig",
    "SystemDims",
    "ClosedLoopRealization",
    "coupling_matrices",
    "build_realization",
    "quantize",
    "update_received",
    "update_zoom",
    "schedule_node",
]


@dataclass(frozen=True)
class PlantModel:
    """Linear plant: xdot = a x + b u_hat, y = c x."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        c = np.asarray(self.c, dtype=float)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"plant a must be square, got {a.shape}")
        n = a.shape[0]
        if b.ndim != 2 or b.shape[0] != n:
            raise DimensionError(f"plant b rows must be {n}, got {b.shape}")
        if c.ndim != 2 or c.shape[1] != n:
            raise DimensionError(f"plant c cols must be {n}, got {c.shape}")

    @property
    def n_state(self) -> int:
        return self.a.shape[0]

    @property
    def n_input(self) -> int:
        return self.b.shape[1]

    @property
    def n_output(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True)
class ControllerModel:
    """Linear controller: xdot = a x + b y_hat, u = c x + d y_hat."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        c = np.asarray(self.c, dtype=float)
        d = np.asarray(self.d, dtype=float)
        for name, m in (("a", a), ("b", b), ("c", c), ("d", d)):
            object.__setattr__(self, name, m)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"controller a must be square, got {a.shape}")
        n = a.shape[0]
        if b.shape[0] != n:
            raise DimensionError("controller b rows mismatch")
        if c.shape[1] != n:
            raise DimensionError("controller c cols mismatch")
        if d.shape != (c.shape[0], b.shape[1]):
            raise DimensionError(f"controller d must be {(c.shape[0], b.shape[1])}, got {d.shape}")

    @property
    def n_state(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True)
class TimingRegion:
    """Admissible (interval, delay) pairs.

    h in [h_min, h_mati], tau in [tau_min, tau_mad] with tau < h; the
    inflation margin widens the region the overapproximation is allowed
    to cover beyond the sampled support.
    """

    h_min: float
    h_mati: float
    tau_min: float = 0.0
    tau_mad: float = 0.0
    inflation: float = 1e-9

    def __post_init__(self):
        if not 0.0 < self.h_min < self.h_mati:
            raise ConfigError(
                f"need 0 < h_min < h_mati, got h_min={self.h_min}, h_mati={self.h_mati}"
            )
        if not 0.0 <= self.tau_min <= self.tau_mad:
            raise ConfigError(f"need 0 <= tau_min <= tau_mad, got {self.tau_min}, {self.tau_mad}")
        if self.tau_mad > self.h_mati:
            raise ConfigError("tau_mad must not exceed h_mati")
        if self.inflation <= 0.0:
            raise ConfigError("inflation margin must be positive")

    def contains(self, h: float, tau: float, slack: float = 0.0) -> bool:
        return (
            self.h_min - slack <= h <= self.h_mati + slack
            and self.tau_min - slack <= tau <= self.tau_mad + slack
            and tau <= h + slack
        )


@dataclass(frozen=True)
class QuantizerConfig:
    """Per-node zoom quantizer constants.

    Each node j quantizes with range ``range_[j] * mu[j]`` and error
    bound ``error_bound[j] * mu[j]``; inputs below the dead zone map to
    exactly zero.  A successful round trip shrinks mu by ``zoom``.
    """

    range_: np.ndarray
    error_bound: np.ndarray
    dead_zone: np.ndarray
    zoom: np.ndarray
    mu0: np.ndarray

    def __post_init__(self):
        for name in ("range_", "error_bound", "dead_zone", "zoom", "mu0"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        L = len(self.range_)
        for name in ("error_bound", "dead_zone", "zoom", "mu0"):
            if len(getattr(self, name)) != L:
                raise ConfigError(f"quantizer field {name} must have {L} entries")
        if not np.all(self.range_ > self.error_bound):
            raise ConfigError("quantizer range must exceed error bound per node")
        if not np.all(self.error_bound > 0.0) or not np.all(self.dead_zone > 0.0):
            raise ConfigError("quantizer error bound and dead zone must be positive")
        if not np.all((self.zoom > 0.0) & (self.zoom < 1.0)):
            raise ConfigError("zoom factors must lie in (0, 1)")
        if not np.all(self.mu0 > 0.0):
            raise ConfigError("initial quantization parameters must be positive")

    @property
    def nodes(self) -> int:
        return len(self.range_)


@dataclass(frozen=True)
class ProtocolSpec:
    """Scheduling rule: which node transmits at step k."""

    kind: str  # quadratic | tod | periodic | round_robin
    q_matrices: tuple[np.ndarray, ...] = ()
    sequence: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("quadratic", "tod", "periodic", "round_robin"):
            raise ConfigError(f"unknown protocol kind {self.kind!r}")
        if self.kind == "quadratic" and not self.q_matrices:
            raise ConfigError("quadratic protocol needs one Q matrix per node")
        if self.kind == "periodic" and not self.sequence:
            raise ConfigError("periodic protocol needs a node sequence")

    def validate(self, L: int) -> None:
        if self.kind == "quadratic":
            if len(self.q_matrices) != L:
                raise ConfigError(f"quadratic protocol needs {L} Q matrices")
        if self.kind == "periodic":
            if any(not 1 <= s <= L for s in self.sequence):
                raise ConfigError("periodic sequence entries must be node indices in 1..L")
            if set(self.sequence) != set(range(1, L + 1)):
                raise ConfigError("periodic sequence must cover every node")

    def period(self, L: int) -> int:
        if self.kind == "periodic":
            return len(self.sequence)
        if self.kind == "round_robin":
            return L
        raise DomainError(f"{self.kind} protocol has no period")


@dataclass(frozen=True)
class NetworkConfig:
    """Node structure, timing law, and dropout rates of the network."""

    gamma_y: tuple[np.ndarray, ...]  # per-node diagonal 0/1 selector over y components
    gamma_u: tuple[np.ndarray, ...]  # per-node selector over u components
    region: TimingRegion
    distribution: "object"  # TimingDistribution, kept loose to avoid an import cycle
    alpha_bar: float
    beta_bar: float
    protocol: ProtocolSpec
    u_direct: bool = False  # control input bypasses the network (always delivered whole)

    def __post_init__(self):
        gy = tuple(np.atleast_1d(np.asarray(g, dtype=float)) for g in self.gamma_y)
        gu = tuple(np.atleast_1d(np.asarray(g, dtype=float)) for g in self.gamma_u)
        object.__setattr__(self, "gamma_y", gy)
        object.__setattr__(self, "gamma_u", gu)
        if len(gy) != len(gu) or not gy:
            raise ConfigError("need one (gamma_y, gamma_u) selector pair per node")
        for g in gy + gu:
            if not np.all((g == 0.0) | (g == 1.0)):
                raise ConfigError("node selectors must be 0/1 diagonals")
        # every output component must belong to exactly one node
        if not np.all(np.sum(np.vstack(gy), axis=0) == 1.0):
            raise ConfigError("each measured output component must belong to exactly one node")
        if self.u_direct:
            if any(not np.all(g == 1.0) for g in gu):
                raise ConfigError("direct control transmission requires full u selectors")
        else:
            if not np.all(np.sum(np.vstack(gu), axis=0) == 1.0):
                raise ConfigError("each control component must belong to exactly one node")
        for rate, name in ((self.alpha_bar, "alpha_bar"), (self.beta_bar, "beta_bar")):
            if not 0.0 < rate <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1], got {rate}")
        self.protocol.validate(len(gy))

    @property
    def node_count(self) -> int:
        return len(self.gamma_y)

    @property
    def n_y(self) -> int:
        return len(self.gamma_y[0])

    @property
    def n_u(self) -> int:
        return len(self.gamma_u[0])

    def selector(self, sigma: int) -> np.ndarray:
        """Combined diagonal selector over (y, u) components for node sigma (1-based)."""
        if not 1 <= sigma <= self.node_count:
            raise IndexError(f"node index {sigma} out of range 1..{self.node_count}")
        return np.concatenate([self.gamma_y[sigma - 1], self.gamma_u[sigma - 1]])

    def y_node_indices(self) -> list[np.ndarray]:
        """Component index arrays of y, one per node."""
        return [np.flatnonzero(g == 1.0) for g in self.gamma_y]


@dataclass(frozen=True)
class SystemDims:
    n_p: int
    n_c: int
    n_y: int
    n_u: int

    @property
    def n_pc(self) -> int:
        return self.n_p + self.n_c

    @property
    def n_z(self) -> int:
        return self.n_y + self.n_u

    @property
    def n_x(self) -> int:
        return self.n_pc + self.n_z


def system_dims(plant: PlantModel, controller: ControllerModel) -> SystemDims:
    dims = SystemDims(plant.n_state, controller.n_state, plant.n_output, plant.n_input)
    if controller.b.shape[1] != dims.n_y:
        raise DimensionError("controller input dimension must equal plant output dimension")
    if controller.c.shape[0] != dims.n_u:
        raise DimensionError("controller output dimension must equal plant input dimension")
    return dims


def coupling_matrices(
    plant: PlantModel, controller: ControllerModel
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Static interconnection blocks (B, C, D, D_inv) shared by the assembly formulas.

    D is unit lower triangular, so its inverse is exact.
    """
    dims = system_dims(plant, controller)
    b = np.zeros((dims.n_pc, dims.n_z))
    b[: dims.n_p, dims.n_y :] = plant.b
    b[dims.n_p :, : dims.n_y] = controller.b
    c = np.zeros((dims.n_z, dims.n_pc))
    c[: dims.n_y, : dims.n_p] = plant.c
    c[dims.n_y :, dims.n_p :] = controller.c
    d = np.eye(dims.n_z)
    d[dims.n_y :, : dims.n_y] = controller.d
    d_inv = np.eye(dims.n_z)
    d_inv[dims.n_y :, : dims.n_y] = -controller.d
    return b, c, d, d_inv


@dataclass(frozen=True)
class ClosedLoopRealization:
    """Exact one-step transition data at a fixed (node, interval, delay).

    The augmented state is (x_p, x_c, e_y, e_u).  The recursion reads

        x+ = a_mat x + b_mat diag(mean) eps + b_mat diag(nu - mean) (eps - e)

    where nu holds the realized packet indicators per (y, u) component and
    mean their expectations; z = h_mat x is the performance output.
    """

    sigma: int
    h: float
    tau: float
    a_mat: np.ndarray
    b_mat: np.ndarray
    h_mat: np.ndarray
    mean_diag: np.ndarray  # expectation of the per-component delivery indicator
    var_diag: np.ndarray  # its per-component variance
    dims: SystemDims

    def step_matrix(self, alpha: float, beta: float) -> np.ndarray:
        """b_mat scaled by the realized fluctuation diag(nu - mean)."""
        nu = np.concatenate(
            [np.full(self.dims.n_y, alpha), np.full(self.dims.n_u, beta)]
        )
        return self.b_mat * (nu - self.mean_diag)


def build_realization(
    plant: PlantModel,
    controller: ControllerModel,
    net: NetworkConfig,
    sigma: int,
    h: float,
    tau: float,
) -> ClosedLoopRealization:
    """Assemble the exact discrete transition matrices at (sigma, h, tau)."""
    dims = system_dims(plant, controller)
    if net.n_y != dims.n_y or net.n_u != dims.n_u:
        raise DimensionError("network selector dimensions do not match the loop")
    if tau > h:
        raise DomainError(f"delay {tau} exceeds interval {h}")
    if tau < 0.0 or h <= 0.0:
        raise DomainError(f"need h > 0 and tau >= 0, got h={h}, tau={tau}")
    slack = net.region.inflation
    if not net.region.contains(h, tau, slack=slack):
        raise DomainError(f"(h, tau) = ({h}, {tau}) outside the admissible region")

    b, c, d, d_inv = coupling_matrices(plant, controller)
    gam = np.diag(net.selector(sigma))
    mean_diag = np.concatenate(
        [np.full(dims.n_y, net.alpha_bar), np.full(dims.n_u, net.beta_bar)]
    )
    var_diag = mean_diag * (1.0 - mean_diag)
    ups = np.diag(mean_diag)

    a_h = np.zeros((dims.n_pc, dims.n_pc))
    a_h[: dims.n_p, : dims.n_p] = matexp(plant.a, h)
    a_h[dims.n_p :, dims.n_p :] = matexp(controller.a, h)
    e_h = np.zeros((dims.n_pc, dims.n_pc))
    e_h[: dims.n_p, : dims.n_p] = matexp_integral(plant.a, h)
    e_h[dims.n_p :, dims.n_p :] = matexp_integral(controller.a, h)
    e_ht = np.zeros((dims.n_pc, dims.n_pc))
    e_ht[: dims.n_p, : dims.n_p] = matexp_integral(plant.a, h - tau)
    e_ht[dims.n_p :, dims.n_p :] = matexp_integral(controller.a, h - tau)

    ident = np.eye(dims.n_pc)
    top_left = a_h + e_h @ b @ d @ c
    top_right = e_h @ b @ d - e_ht @ b @ ups @ gam
    bot_left = c @ (ident - top_left)
    bot_right = (
        np.eye(dims.n_z)
        - c @ e_h @ b @ d
        - (d_inv - c @ e_ht @ b) @ ups @ gam
    )
    a_mat = np.block([[top_left, top_right], [bot_left, bot_right]])

    b_mat = np.vstack([e_ht @ b @ gam, d_inv @ gam - c @ e_ht @ b @ gam])
    h_mat = np.hstack([d @ c, d - np.eye(dims.n_z)])

    return ClosedLoopRealization(
        sigma=sigma,
        h=float(h),
        tau=float(tau),
        a_mat=a_mat,
        b_mat=b_mat,
        h_mat=h_mat,
        mean_diag=mean_diag,
        var_diag=var_diag,
        dims=dims,
    )


# ---------------------------------------------------------------------------
# quantizer and hold/zoom updates


def quantize(
    q: QuantizerConfig,
    mu: np.ndarray,
    z: np.ndarray,
    node_indices: list[np.ndarray],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quantize z node by node.

    Returns (quantized vector, quantization error, per-node saturation
    flags).  Uses a uniform mid-rise lattice with per-node step chosen so
    the worst-case error over a node stays within its scaled bound; a
    node whose input norm is inside the dead zone emits exactly zero.
    Saturation is reported, never clipped.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    z = np.asarray(z, dtype=float)
    if np.any(mu <= 0.0):
        raise DomainError("quantization parameters must be positive")
    if len(node_indices) != q.nodes or len(mu) != q.nodes:
        raise DimensionError("node partition and mu must match the quantizer node count")
    out = np.zeros_like(z)
    saturated = np.zeros(q.nodes, dtype=bool)
    for j, idx in enumerate(node_indices):
        zj = z[idx]
        nj = max(len(idx), 1)
        norm = np.linalg.norm(zj)
        if norm <= q.dead_zone[j] * mu[j]:
            continue  # dead zone: exact zero output
        step = 2.0 * q.error_bound[j] * mu[j] / np.sqrt(nj)
        out[idx] = step * (np.floor(zj / step) + 0.5)
        if norm > q.range_[j] * mu[j]:
            saturated[j] = True
    return out, out - z, saturated


def update_received(
    held: np.ndarray,
    fresh: np.ndarray,
    selector: np.ndarray,
    received: int,
) -> np.ndarray:
    """Hold-update of a received-value register.

    With a successful transmission the selected components take the
    fresh (already quantized) values; everything else holds.
    """
    held = np.asarray(held, dtype=float)
    fresh = np.asarray(fresh, dtype=float)
    sel = np.asarray(selector, dtype=float)
    if held.shape != fresh.shape or held.shape != sel.shape:
        raise DimensionError("held, fresh and selector must share one shape")
    gate = float(received) * sel
    return gate * fresh + (1.0 - gate) * held


def update_zoom(mu: np.ndarray, alpha: int, beta: int, q: QuantizerConfig) -> np.ndarray:
    """Zoom law: shrink every mu by its factor only on a fully successful step."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if min(alpha, beta) == 1:
        return q.zoom * mu
    return mu.copy()


def schedule_node(
    protocol: ProtocolSpec,
    L: int,
    k: int,
    x_bar: np.ndarray | None = None,
    eps_bar: np.ndarray | None = None,
    e_vec: np.ndarray | None = None,
    net: NetworkConfig | None = None,
) -> int:
    """Pick the transmitting node (1-based) at step k."""
    if protocol.kind == "round_robin":
        return (k % L) + 1
    if protocol.kind == "periodic":
        return protocol.sequence[k % len(protocol.sequence)]
    if protocol.kind == "quadratic":
        if x_bar is None or eps_bar is None:
            raise DomainError("quadratic protocol needs the current state and error")
        v = np.concatenate([x_bar, eps_bar])
        scores = [float(v @ q @ v) for q in protocol.q_matrices]
        return int(np.argmax(scores)) + 1  # argmax takes the smallest index on ties
    # TOD: largest per-node norm of (e - eps), smallest index on ties
    if e_vec is None or eps_bar is None or net is None:
        raise DomainError("TOD protocol needs the error vectors and network layout")
    diff = e_vec - eps_bar
    scores = []
    for sigma in range(1, L + 1):
        sel = net.selector(sigma)
        scores.append(float(np.sum((sel * diff) ** 2)))
    return int(np.argmax(scores)) + 1
