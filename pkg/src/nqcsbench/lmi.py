"""Assembly of the stability / performance matrix-inequality systems.

From a polytopic model this module produces one symmetric block
constraint per (active region, successor region, triangle, triangle
vertex), jointly affine in the Lyapunov matrices and all scalar
multipliers.

Row layout of one block (widths in parentheses):

    1  state                          (n_x)
    2  quantization error             (n_z)
    3  mean one-step image            (n_x)
    4+ one fluctuation image row per dropout channel with
       nonzero variance                (n_x each)
    then one uncertainty input row per image row   (n1 each)

The dropout fluctuation acts on the gap between the quantization error
and the held-value error.  That gap is a linear function of the block
coordinates, so it is substituted exactly instead of being carried as an
independent input row; the fluctuation budget stays in the system as an
extra relaxation term, which keeps the certificate constants intact
while avoiding the severe conservatism of a free fluctuation vector.

Each triangle of the timing partition carries its own share of the
decrease, error-gain, fluctuation and performance budgets as free
nonnegative scalars, and its own symmetric share of the Lyapunov
budget; coupling constraints tie the per-triangle shares to the
requested totals (the matrix shares must sum below the active Lyapunov
matrix), so triangles where the dynamics expand can borrow slack from
contractive ones without breaking soundness.

The norm-bounded envelope uncertainty is absorbed exactly: each image
row carries a scalar multiplier variable that scales the squared
uncertainty source on the input rows, while the uncertainty input row
couples the image back through the envelope input matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .errors import CertificateInvalidError, ConfigError, DimensionError
from .linalg import symmetric_eigen
from .overapprox import PolytopicModel

__all__ = [
    "FixedParams",
    "VariableLayout",
    "LmiConstraint",
    "LmiProblem",
    "LmiCertificate",
    "tod_q_matrices",
    "assemble_quadratic",
    "assemble_periodic",
    "derive_certificate",
]

# triangles below this probability carry no measurable mass and are skipped
PROBABILITY_FLOOR = 1e-12
# default positive-definiteness margin, relative to constraint scale
DEFAULT_MARGIN_TOL = 1e-7


@dataclass(frozen=True)
class FixedParams:
    """Fixed scalars of the inequality system.

    ``a3`` is the required total state decrease and ``a5`` the total
    fluctuation-input budget.  ``gamma2`` is the performance attenuation
    target: a finite value caps the total error gain at gamma2 - a5 and
    activates the performance-output terms; ``math.inf`` drops the
    performance terms (the ideal case) and caps the error gain at
    ``a4_ideal``.
    """

    a3: float = 1e-2
    a5: float = 1e-4
    gamma2: float = math.inf
    a4_ideal: float = 1e3
    margin_tol: float = DEFAULT_MARGIN_TOL

    def a4_cap(self) -> float:
        if math.isinf(self.gamma2):
            return self.a4_ideal
        if self.gamma2 <= self.a5:
            raise ConfigError(f"gamma2 must exceed a5, got {self.gamma2} <= {self.a5}")
        return self.gamma2 - self.a5


class VariableLayout:
    """Flat packing of symmetric matrix variables and scalars.

    Symmetric matrices are stored as their upper triangles in row-major
    order; scalars follow.
    """

    def __init__(self, matrices: list[tuple[str, int]], scalars: list[str]):
        self.matrices = list(matrices)
        self.scalars = list(scalars)
        self._mat_offset: list[int] = []
        off = 0
        for _, n in self.matrices:
            self._mat_offset.append(off)
            off += n * (n + 1) // 2
        self._scalar_offset = off
        self.dim = off + len(self.scalars)
        self._scalar_index = {name: off + i for i, name in enumerate(self.scalars)}

    def matrix_entry_index(self, mat: int, a: int, b: int) -> int:
        n = self.matrices[mat][1]
        if a > b:
            a, b = b, a
        # row-major upper triangle offset
        return self._mat_offset[mat] + a * n - a * (a - 1) // 2 + (b - a)

    def scalar_index(self, name: str) -> int:
        return self._scalar_index[name]

    def pack_matrices(self, mats: list[np.ndarray]) -> np.ndarray:
        x = np.zeros(self.dim)
        for mi, m in enumerate(mats):
            n = self.matrices[mi][1]
            for a in range(n):
                for b in range(a, n):
                    x[self.matrix_entry_index(mi, a, b)] = m[a, b]
        return x

    def unpack_matrix(self, x: np.ndarray, mat: int) -> np.ndarray:
        n = self.matrices[mat][1]
        m = np.zeros((n, n))
        for a in range(n):
            for b in range(a, n):
                v = x[self.matrix_entry_index(mat, a, b)]
                m[a, b] = v
                m[b, a] = v
        return m


@dataclass
class LmiConstraint:
    """One affine symmetric constraint.

    ``matrix`` has shape (1 + layout.dim, block_dim**2); evaluating at a
    variable vector x is ``([1, x] @ matrix).reshape(dim, dim)``.  Sense
    "neg" requires the result negative semidefinite (with margin), sense
    "pos" positive semidefinite.
    """

    name: str
    dim: int
    matrix: scipy.sparse.csr_matrix
    sense: str
    scale: float = 1.0

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        v = np.concatenate([[1.0], x])
        return np.asarray((v @ self.matrix)).reshape(self.dim, self.dim)


@dataclass
class LmiProblem:
    layout: VariableLayout
    constraints: list[LmiConstraint]
    fixed: FixedParams
    protocol_kind: str
    lyapunov_count: int
    n_x: int
    meta: dict = field(default_factory=dict)

    def lyapunov_matrices(self, x: np.ndarray) -> list[np.ndarray]:
        return [self.layout.unpack_matrix(x, i) for i in range(self.lyapunov_count)]


class _Builder:
    """Triplet accumulator for one affine symmetric block constraint."""

    def __init__(self, layout: VariableLayout, block_dim: int):
        self.layout = layout
        self.nb = block_dim
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []

    def _put(self, var_row: int, r: np.ndarray, c: np.ndarray, v: np.ndarray):
        keep = v != 0.0
        if not np.any(keep):
            return
        self.rows.append(np.full(int(np.sum(keep)), var_row))
        self.cols.append((r[keep] * self.nb + c[keep]).astype(np.int64))
        self.vals.append(v[keep].astype(float))

    def _place(self, var_row: int, r0: int, c0: int, mat: np.ndarray, mirror: bool):
        mat = np.asarray(mat, dtype=float)
        rr, cc = np.nonzero(mat)
        self._put(var_row, r0 + rr, c0 + cc, mat[rr, cc])
        if mirror:
            self._put(var_row, c0 + cc, r0 + rr, mat[rr, cc])

    def add_const(self, r0: int, c0: int, mat: np.ndarray, mirror: bool = False):
        self._place(0, r0, c0, mat, mirror)

    def add_scalar(self, name: str, r0: int, c0: int, mat: np.ndarray, mirror: bool = False):
        self._place(1 + self.layout.scalar_index(name), r0, c0, mat, mirror)

    def add_left_matvar(self, mat_idx: int, r0: int, c0: int, right: np.ndarray, mirror: bool = True):
        """Place P @ right at (r0, c0) for the symmetric variable P."""
        right = np.asarray(right, dtype=float)
        n = self.layout.matrices[mat_idx][1]
        for a in range(n):
            for b in range(a, n):
                var_row = 1 + self.layout.matrix_entry_index(mat_idx, a, b)
                # (S_ab @ right) has right[b] in row a and right[a] in row b
                row_b = right[b]
                nz = np.nonzero(row_b)[0]
                if len(nz):
                    self._put(var_row, np.full(len(nz), r0 + a), c0 + nz, row_b[nz])
                    if mirror:
                        self._put(var_row, c0 + nz, np.full(len(nz), r0 + a), row_b[nz])
                if a != b:
                    row_a = right[a]
                    nz = np.nonzero(row_a)[0]
                    if len(nz):
                        self._put(var_row, np.full(len(nz), r0 + b), c0 + nz, row_a[nz])
                        if mirror:
                            self._put(var_row, c0 + nz, np.full(len(nz), r0 + b), row_a[nz])

    def build(self, name: str, sense: str, scale: float) -> LmiConstraint:
        if self.rows:
            rows = np.concatenate(self.rows)
            cols = np.concatenate(self.cols)
            vals = np.concatenate(self.vals)
        else:
            rows = cols = vals = np.zeros(0)
        mat = scipy.sparse.csr_matrix(
            (vals, (rows, cols)), shape=(1 + self.layout.dim, self.nb * self.nb)
        )
        mat.sum_duplicates()
        return LmiConstraint(name=name, dim=self.nb, matrix=mat, sense=sense, scale=scale)


def tod_q_matrices(model: PolytopicModel, net) -> list[np.ndarray]:
    """Quadratic-protocol matrices reproducing largest-error scheduling.

    The score of node i is the squared norm of that node's share of the
    gap between held-value error and quantization error.
    """
    dims = model.dims
    s = np.zeros((dims.n_z, dims.n_x + dims.n_z))
    s[:, dims.n_pc : dims.n_x] = np.eye(dims.n_z)
    s[:, dims.n_x :] = -np.eye(dims.n_z)
    out = []
    for sigma in range(1, net.node_count + 1):
        j_hat = np.diag(net.selector(sigma))
        out.append(s.T @ j_hat @ s)
    return out


def _active_triangles(model: PolytopicModel) -> list[int]:
    return [m for m in range(model.partition.triangle_count)
            if model.partition.probabilities[m] > PROBABILITY_FLOOR]


def _fluctuation_channels(model: PolytopicModel) -> list[tuple[str, float, np.ndarray]]:
    """Per dropout channel: (name, variance, component selector)."""
    dims = model.dims
    vy = float(model.var_diag[0]) if dims.n_y else 0.0
    vu = float(model.var_diag[dims.n_y]) if dims.n_u else 0.0
    chans = []
    if vy > 0.0:
        sel = np.diag(np.concatenate([np.ones(dims.n_y), np.zeros(dims.n_u)]))
        chans.append(("y", vy, sel))
    if vu > 0.0:
        sel = np.diag(np.concatenate([np.zeros(dims.n_y), np.ones(dims.n_u)]))
        chans.append(("u", vu, sel))
    return chans


def _lam_names(chans: list, successor: int) -> list[str]:
    """Multiplier variable names for one successor index: mean row first."""
    return [f"lam_mean_{successor + 1}"] + [f"lam_{nm}_{successor + 1}" for nm, _, _ in chans]


def theorem_variance_pattern(model: PolytopicModel) -> np.ndarray:
    """Duplicated per-channel variance diagonal over (y, u, y, u) components."""
    return np.concatenate([model.var_diag, model.var_diag])


def _assemble_block(
    builder: _Builder,
    model: PolytopicModel,
    fixed: FixedParams,
    m: int,
    n: int,
    sigma: int,
    g_idx: int,  # matrix variable index of this triangle's Lyapunov share
    p_next: int,  # Lyapunov variable index for the successor
    zeta_terms: list[tuple[str, np.ndarray]] | None,
    include_output: bool,
) -> None:
    """Populate one constraint block at (triangle m, vertex n, node sigma)."""
    dims = model.dims
    n_x, n_z = dims.n_x, dims.n_z
    n1 = model.b_bar.shape[1]
    pbar = float(model.partition.probabilities[m])
    sp = math.sqrt(pbar)

    ups = np.diag(model.mean_diag)
    a_bar = model.a_bar[sigma - 1, n]
    e_bar = model.e_bar[sigma - 1, n]
    c_bar = model.c_bar[sigma - 1]
    f_bar = model.f_bar[sigma - 1]
    chans = _fluctuation_channels(model)

    # fluctuation gap: quantization error minus held-value error, as a
    # linear map on the (state, error) coordinates
    gap = np.hstack([np.zeros((n_z, dims.n_pc)), -np.eye(n_z), np.eye(n_z)])

    # row offsets
    r1 = 0
    r2 = r1 + n_x
    r3 = r2 + n_z
    image_rows = [r3] + [r3 + (k + 1) * n_x for k in range(len(chans))]
    unc0 = image_rows[-1] + n_x

    # rows 1..2: state and error budgets, per-triangle shares
    builder.add_left_matvar(g_idx, r1, r1, -np.eye(n_x), mirror=False)
    builder.add_scalar(f"decay_{m}", r1, r1, np.eye(n_x))
    builder.add_scalar(f"errgain_{m}", r2, r2, -np.eye(n_z))
    builder.add_scalar(f"flucgain_{m}", r1, r1, -gap.T @ gap)
    if zeta_terms is not None:
        # S-procedure: states scheduled in region i satisfy v' (Q_i - Q_l) v >= 0
        for base, qdiff in zeta_terms:
            name = f"{base}_{m}"
            builder.add_scalar(name, r1, r1, qdiff[:n_x, :n_x])
            builder.add_scalar(name, r2, r1, qdiff[n_x:, :n_x], mirror=True)
            builder.add_scalar(name, r2, r2, qdiff[n_x:, n_x:])

    if include_output:
        builder.add_scalar(f"outweight_{m}", r1, r1, model.h_mat.T @ model.h_mat)

    # mean image row
    builder.add_left_matvar(p_next, image_rows[0], r1, sp * a_bar)
    builder.add_left_matvar(p_next, image_rows[0], r2, sp * e_bar @ ups)
    builder.add_left_matvar(p_next, image_rows[0], image_rows[0], -np.eye(n_x), mirror=False)

    # fluctuation image rows act on the substituted gap coordinates
    for k, (_, var, sel) in enumerate(chans):
        r = image_rows[k + 1]
        builder.add_left_matvar(p_next, r, r1, math.sqrt(pbar * var) * e_bar @ sel @ gap)
        builder.add_left_matvar(p_next, r, r, -np.eye(n_x), mirror=False)

    # uncertainty absorption: per image row, a multiplier times the squared
    # uncertainty source on the input rows plus an envelope coupling row
    lam_names = _lam_names(chans, p_next)
    for k, r_img in enumerate(image_rows):
        rx = unc0 + k * n1
        if k == 0:
            src = np.hstack([c_bar, f_bar @ ups])  # acts on (state, error) columns
            builder.add_scalar(lam_names[0], r1, r1, pbar * src.T @ src)
        else:
            _, var, sel = chans[k - 1]
            src = f_bar @ sel @ gap
            builder.add_scalar(lam_names[k], r1, r1, pbar * var * src.T @ src)
        builder.add_left_matvar(p_next, r_img, rx, model.b_bar)
        builder.add_scalar(lam_names[k], rx, rx, -np.eye(n1))


def _block_dim(model: PolytopicModel, include_output: bool) -> int:
    dims = model.dims
    n1 = model.b_bar.shape[1]
    image_rows = 1 + len(_fluctuation_channels(model))
    return dims.n_x + dims.n_z + image_rows * (dims.n_x + n1)


def _positivity_constraints(layout: VariableLayout, count: int, n_x: int) -> list[LmiConstraint]:
    out = []
    for i in range(count):
        b = _Builder(layout, n_x)
        b.add_left_matvar(i, 0, 0, np.eye(n_x), mirror=False)
        out.append(b.build(f"P_{i + 1}_pd", "pos", 1.0))
    return out


def _budget_names(active: list[int], include_output: bool) -> list[str]:
    names = [f"decay_{m}" for m in active]
    names += [f"errgain_{m}" for m in active]
    names += [f"flucgain_{m}" for m in active]
    if include_output:
        names += [f"outweight_{m}" for m in active]
    return names


def _coupling_constraints(
    layout: VariableLayout, active: list[int], fixed: FixedParams, include_output: bool
) -> list[LmiConstraint]:
    """Tie the per-triangle budget shares to the requested totals.

    The decrease shares must provide at least the requested total, the
    error-gain and fluctuation shares must stay within their caps, and
    the performance weights must cover the full output norm.
    """
    out = []
    b = _Builder(layout, 1)
    for m in active:
        b.add_scalar(f"decay_{m}", 0, 0, np.eye(1))
    b.add_const(0, 0, -fixed.a3 * np.eye(1))
    out.append(b.build("decay_total", "pos", max(1.0, fixed.a3)))
    b = _Builder(layout, 1)
    for m in active:
        b.add_scalar(f"errgain_{m}", 0, 0, -np.eye(1))
    b.add_const(0, 0, fixed.a4_cap() * np.eye(1))
    out.append(b.build("errgain_total", "pos", max(1.0, fixed.a4_cap())))
    b = _Builder(layout, 1)
    for m in active:
        b.add_scalar(f"flucgain_{m}", 0, 0, -np.eye(1))
    b.add_const(0, 0, fixed.a5 * np.eye(1))
    out.append(b.build("flucgain_total", "pos", max(1.0, fixed.a5)))
    if include_output:
        b = _Builder(layout, 1)
        for m in active:
            b.add_scalar(f"outweight_{m}", 0, 0, np.eye(1))
        b.add_const(0, 0, -np.eye(1))
        out.append(b.build("outweight_total", "pos", 1.0))
    return out


def _nonneg_constraints(layout: VariableLayout, names: list[str]) -> list[LmiConstraint]:
    out = []
    for name in names:
        b = _Builder(layout, 1)
        b.add_scalar(name, 0, 0, np.eye(1))
        out.append(b.build(f"{name}_nonneg", "pos", 1.0))
    return out


def assemble_quadratic(
    model: PolytopicModel,
    net,
    q_matrices: list[np.ndarray],
    fixed: FixedParams,
) -> LmiProblem:
    """Constraint system for state-dependent (quadratic / largest-error) scheduling.

    The successor region of a state-dependent protocol is unknown ahead
    of time, so every constraint is required for every successor index.
    """
    L = net.node_count
    if len(q_matrices) != L:
        raise DimensionError(f"need {L} protocol matrices, got {len(q_matrices)}")
    dims = model.dims
    include_output = not math.isinf(fixed.gamma2)
    active = _active_triangles(model)

    chans = _fluctuation_channels(model)
    lam_all = [name for j in range(L) for name in _lam_names(chans, j)]
    zeta_all = [
        f"zeta_{i + 1}_{l + 1}_{m}"
        for i in range(L)
        for l in range(L)
        if l != i
        for m in active
    ]
    budget = _budget_names(active, include_output)
    matrices = [(f"P_{i + 1}", dims.n_x) for i in range(L)]
    g_index: dict[tuple[int, int, int], int] = {}
    for i in range(L):
        for j in range(L):
            for m in active:
                g_index[(i, j, m)] = len(matrices)
                matrices.append((f"G_{i + 1}_{j + 1}_{m}", dims.n_x))
    layout = VariableLayout(matrices=matrices, scalars=budget + zeta_all + lam_all)
    nb = _block_dim(model, include_output)
    constraints = _positivity_constraints(layout, L, dims.n_x)
    constraints += _nonneg_constraints(layout, budget + zeta_all + lam_all)
    constraints += _coupling_constraints(layout, active, fixed, include_output)
    for i in range(L):
        for j in range(L):
            b = _Builder(layout, dims.n_x)
            for m in active:
                b.add_left_matvar(g_index[(i, j, m)], 0, 0, np.eye(dims.n_x), mirror=False)
            b.add_left_matvar(i, 0, 0, -np.eye(dims.n_x), mirror=False)
            constraints.append(b.build(f"share_total_i{i + 1}_j{j + 1}", "neg", 1.0))

    for i in range(L):
        zeta_terms = [
            (f"zeta_{i + 1}_{l + 1}", q_matrices[i] - q_matrices[l]) for l in range(L) if l != i
        ]
        for j in range(L):
            for m in active:
                for n in model.partition.triangles[m]:
                    b = _Builder(layout, nb)
                    _assemble_block(
                        b, model, fixed, m, int(n), i + 1,
                        g_idx=g_index[(i, j, m)], p_next=j, zeta_terms=zeta_terms,
                        include_output=include_output,
                    )
                    cons = b.build(f"omega_i{i + 1}_j{j + 1}_m{m}_n{n}", "neg", 1.0)
                    cons.scale = max(1.0, scipy.sparse.linalg.norm(cons.matrix[0]))
                    constraints.append(cons)

    return LmiProblem(
        layout=layout,
        constraints=constraints,
        fixed=fixed,
        protocol_kind="quadratic",
        lyapunov_count=L,
        n_x=dims.n_x,
        meta={"block_dim": nb, "node_count": L, "active_triangles": tuple(active)},
    )


def assemble_periodic(
    model: PolytopicModel,
    net,
    sequence: list[int],
    fixed: FixedParams,
) -> LmiProblem:
    """Constraint system for a fixed cyclic schedule.

    One Lyapunov matrix per sequence position, chained cyclically; the
    region-coupling terms vanish.
    """
    dims = model.dims
    n1 = len(sequence)
    include_output = not math.isinf(fixed.gamma2)
    active = _active_triangles(model)

    chans = _fluctuation_channels(model)
    lam_all = [name for p in range(n1) for name in _lam_names(chans, p)]
    budget = _budget_names(active, include_output)
    matrices = [(f"P_{p + 1}", dims.n_x) for p in range(n1)]
    g_index: dict[tuple[int, int], int] = {}
    for p in range(n1):
        for m in active:
            g_index[(p, m)] = len(matrices)
            matrices.append((f"G_{p + 1}_{m}", dims.n_x))
    layout = VariableLayout(matrices=matrices, scalars=budget + lam_all)
    nb = _block_dim(model, include_output)
    constraints = _positivity_constraints(layout, n1, dims.n_x)
    constraints += _nonneg_constraints(layout, budget + lam_all)
    constraints += _coupling_constraints(layout, active, fixed, include_output)
    for p in range(n1):
        b = _Builder(layout, dims.n_x)
        for m in active:
            b.add_left_matvar(g_index[(p, m)], 0, 0, np.eye(dims.n_x), mirror=False)
        b.add_left_matvar(p, 0, 0, -np.eye(dims.n_x), mirror=False)
        constraints.append(b.build(f"share_total_p{p + 1}", "neg", 1.0))
    for p in range(n1):
        sigma = sequence[p]
        succ = (p + 1) % n1
        for m in active:
            for n in model.partition.triangles[m]:
                b = _Builder(layout, nb)
                _assemble_block(
                    b, model, fixed, m, int(n), sigma,
                    g_idx=g_index[(p, m)], p_next=succ, zeta_terms=None,
                    include_output=include_output,
                )
                cons = b.build(f"omega_p{p}_m{m}_n{n}", "neg", 1.0)
                cons.scale = max(1.0, scipy.sparse.linalg.norm(cons.matrix[0]))
                constraints.append(cons)

    return LmiProblem(
        layout=layout,
        constraints=constraints,
        fixed=fixed,
        protocol_kind="periodic",
        lyapunov_count=n1,
        n_x=dims.n_x,
        meta={"block_dim": nb, "sequence": tuple(sequence), "active_triangles": tuple(active)},
    )


@dataclass(frozen=True)
class LmiCertificate:
    """Solved Lyapunov data and the stability / performance constants."""

    p_matrices: tuple[np.ndarray, ...]
    scalars: dict
    margin: float
    a1: float
    a2: float
    a3: float
    a4: float
    a5: float
    c1: float
    c2: float
    c3: float
    gamma1: float
    gamma2: float


def derive_certificate(problem: LmiProblem, x: np.ndarray, margin: float) -> LmiCertificate:
    """Stability and performance constants from a feasible point.

    The decay and gain constants follow from the extreme Lyapunov
    eigenvalues; hypotheses that would break the decay formula are
    rejected.
    """
    if margin >= 0.0:
        raise CertificateInvalidError(f"solution margin {margin} is not negative")
    fixed = problem.fixed
    p_mats = problem.lyapunov_matrices(x)
    mins, maxs = [], []
    for p in p_mats:
        w, _ = symmetric_eigen(p)
        mins.append(w[0])
        maxs.append(w[-1])
    a1, a2 = float(min(mins)), float(max(maxs))

    def total(prefix: str) -> float:
        return float(
            sum(
                x[problem.layout.scalar_index(name)]
                for name in problem.layout.scalars
                if name.startswith(prefix)
            )
        )

    # effective totals realized by the per-triangle shares; the coupling
    # constraints guarantee these beat the requested values
    a3 = total("decay_")
    a4 = total("errgain_")
    a5 = total("flucgain_")
    if a1 <= 0.0:
        raise CertificateInvalidError("a Lyapunov matrix is not positive definite")
    if a3 <= 2.0 * a5:
        raise CertificateInvalidError(f"need a3 > 2 a5, got a3={a3}, a5={a5}")
    if a2 < a3:
        raise CertificateInvalidError(f"need a2 >= a3, got a2={a2}, a3={a3}")
    scalars = {
        name: float(x[problem.layout.scalar_index(name)]) for name in problem.layout.scalars
    }
    c2 = -math.log(1.0 - (a3 - 2.0 * a5) / a2)
    gamma1 = a2 * (a4 + 2.0 * a5) / (a1 * (a3 - 2.0 * a5))
    gamma2 = math.inf if math.isinf(fixed.gamma2) else a4 + a5
    return LmiCertificate(
        p_matrices=tuple(p_mats),
        scalars=scalars,
        margin=float(margin),
        a1=a1,
        a2=a2,
        a3=a3,
        a4=a4,
        a5=a5,
        c1=a2 / a1,
        c2=c2,
        c3=a2,
        gamma1=gamma1,
        gamma2=gamma2,
    )
