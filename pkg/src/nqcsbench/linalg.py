"""Dense real-matrix kernels: matrix exponential, its integral, symmetric
eigendecomposition, and a real block-eigenvalue (Jordan-style) decomposition.

Everything here is pure and operates on plain ``numpy`` arrays.  The block
decomposition is the numerically-hardened replacement for an exact Jordan
form: eigenvalues are clustered, defective clusters are reduced to
bidiagonal chains when that can be done stably, and anything worse is kept
as a (still exponentiable) triangular block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DimensionError, DomainError, IllConditionedDecompositionError

__all__ = [
    "KernelConfig",
    "DEFAULT_CONFIG",
    "BlockDecomposition",
    "matexp",
    "matexp_integral",
    "symmetric_eigen",
    "real_block_decompose",
]


@dataclass(frozen=True)
class KernelConfig:
    """Tunable constants for the kernels (exposed, not hard-coded)."""

    #: 1-norm threshold below which the order-13 rational approximant is
    #: applied without scaling.
    squaring_threshold: float = 5.371920351148152
    #: relative symmetry tolerance accepted by :func:`symmetric_eigen`
    sym_tol: float = 1e-8
    #: relative gap under which eigenvalues are merged into one cluster
    cluster_tol: float = 1e-6
    #: relative reconstruction residual allowed for a block decomposition
    reconstruction_tol: float = 1e-8
    #: condition number of the transform above which decomposition fails
    condition_limit: float = 1e12
    #: eigenvector-matrix condition above which the defective path is tried
    defective_switch: float = 1e8


DEFAULT_CONFIG = KernelConfig()

# Order-13 diagonal Pade numerator coefficients for exp.
_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)


def _as_square(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} has non-finite entries")
    return a


def matexp(a: np.ndarray, t: float = 1.0, config: KernelConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Compute ``exp(a * t)`` by scaling and squaring.

    Uses the order-13 diagonal rational approximant with squaring whenever
    ``norm1(a*t)`` exceeds ``config.squaring_threshold``.
    """
    a = _as_square(a)
    if not np.isfinite(t):
        raise DomainError("time argument must be finite")
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    m = a * float(t)
    norm = np.linalg.norm(m, 1)
    if norm == 0.0:
        return np.eye(n)
    s = 0
    if norm > config.squaring_threshold:
        s = int(np.ceil(np.log2(norm / config.squaring_threshold)))
        m = m / (2.0**s)

    b = _PADE13
    ident = np.eye(n)
    m2 = m @ m
    m4 = m2 @ m2
    m6 = m4 @ m2
    u = m @ (
        m6 @ (b[13] * m6 + b[11] * m4 + b[9] * m2)
        + b[7] * m6
        + b[5] * m4
        + b[3] * m2
        + b[1] * ident
    )
    v = (
        m6 @ (b[12] * m6 + b[10] * m4 + b[8] * m2)
        + b[6] * m6
        + b[4] * m4
        + b[2] * m2
        + b[0] * ident
    )
    r = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    return r


def matexp_integral(a: np.ndarray, rho: float, config: KernelConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Compute ``int_0^rho exp(a s) ds``.

    Evaluated through the augmented-matrix identity: the upper-right block
    of ``exp([[a, I], [0, 0]] * rho)`` is exactly the integral.
    """
    a = _as_square(a)
    if not np.isfinite(rho) or rho < 0.0:
        raise DomainError(f"integration length must be >= 0, got {rho}")
    n = a.shape[0]
    if rho == 0.0:
        return np.zeros((n, n))
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = a
    aug[:n, n:] = np.eye(n)
    return matexp(aug, rho, config)[:n, n:]


def symmetric_eigen(
    s: np.ndarray, config: KernelConfig = DEFAULT_CONFIG
) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecompose a symmetric matrix; eigenvalues ascending.

    Returns ``(w, v)`` with ``s = v @ diag(w) @ v.T`` and orthogonal ``v``.
    """
    s = _as_square(s, "symmetric matrix")
    scale = np.linalg.norm(s)
    if np.linalg.norm(s - s.T) > config.sym_tol * max(scale, 1e-300):
        raise DomainError("matrix is not symmetric within tolerance")
    w, v = np.linalg.eigh(0.5 * (s + s.T))
    return w, v


# ---------------------------------------------------------------------------
# real block-eigenvalue decomposition


@dataclass
class BlockDecomposition:
    """Similarity ``a = transform @ blockdiag(blocks) @ inv(transform)``.

    ``kinds[i]`` is one of ``"real"`` (1x1), ``"pair"`` (2x2 rotation-scaling
    for a complex-conjugate pair), ``"bidiagonal"`` (defective chain) or
    ``"triangular"`` (cluster kept in quasi-triangular form).
    """

    transform: np.ndarray
    blocks: list[np.ndarray]
    kinds: list[str] = field(default_factory=list)

    @property
    def block_sizes(self) -> list[int]:
        return [b.shape[0] for b in self.blocks]

    @property
    def dimension(self) -> int:
        return int(sum(self.block_sizes))

    def block_diagonal(self) -> np.ndarray:
        out = np.zeros((self.dimension, self.dimension))
        k = 0
        for b in self.blocks:
            n = b.shape[0]
            out[k : k + n, k : k + n] = b
            k += n
        return out

    def reconstruct(self) -> np.ndarray:
        t = self.transform
        return t @ self.block_diagonal() @ np.linalg.inv(t)

    def condition(self) -> float:
        return float(np.linalg.cond(self.transform))


def _cluster_indices(values: np.ndarray, tol: float) -> list[list[int]]:
    """Group indices of ``values`` whose pairwise gap is within ``tol`` (relative)."""
    n = len(values)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    scale = max(1.0, float(np.max(np.abs(values))) if n else 1.0)
    for i in range(n):
        for j in range(i + 1, n):
            if abs(values[i] - values[j]) <= tol * scale:
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def _pair_block(lam: complex) -> np.ndarray:
    a, b = lam.real, abs(lam.imag)
    return np.array([[a, b], [-b, a]])


def _from_eigenvectors(a: np.ndarray) -> BlockDecomposition | None:
    """Semisimple path: build 1x1 / 2x2 blocks straight from eigenvectors."""
    w, v = np.linalg.eig(a)
    cols: list[np.ndarray] = []
    blocks: list[np.ndarray] = []
    kinds: list[str] = []
    used = np.zeros(len(w), dtype=bool)
    order = np.argsort(w.real, kind="stable")
    for i in order:
        if used[i]:
            continue
        used[i] = True
        lam = w[i]
        if abs(lam.imag) <= 1e-14 * max(1.0, abs(lam)):
            vec = v[:, i].real
            nv = np.linalg.norm(vec)
            if nv == 0.0:
                return None
            cols.append(vec / nv)
            blocks.append(np.array([[lam.real]]))
            kinds.append("real")
        else:
            # find the unused conjugate partner
            j = None
            for k in range(len(w)):
                if not used[k] and abs(w[k] - np.conj(lam)) <= 1e-8 * max(1.0, abs(lam)):
                    j = k
                    break
            if j is None:
                return None
            used[j] = True
            lam = lam if lam.imag > 0 else np.conj(lam)
            vec = v[:, i] if w[i].imag > 0 else v[:, j]
            vr, vi = vec.real, vec.imag
            nv = max(np.linalg.norm(vr), np.linalg.norm(vi))
            if nv == 0.0:
                return None
            cols.append(vr / nv)
            cols.append(vi / nv)
            blocks.append(_pair_block(lam))
            kinds.append("pair")
    t = np.column_stack(cols)
    return BlockDecomposition(t, blocks, kinds)


def _jordan_chains(nil: np.ndarray, tol: float) -> np.ndarray | None:
    """Basis in which a (numerically) nilpotent matrix becomes shift blocks.

    Returns the column basis, chains stacked with longest first, each chain
    ordered so the matrix action maps basis vector j to j-1.  ``None`` when
    the staircase structure cannot be resolved at the given tolerance.
    """
    n = nil.shape[0]
    powers = [np.eye(n)]
    while len(powers) <= n:
        nxt = nil @ powers[-1]
        powers.append(nxt)
        if np.linalg.norm(nxt) <= tol:
            break
    depth = len(powers) - 1  # nil**depth ~ 0
    if np.linalg.norm(powers[-1]) > tol:
        return None

    def nullspace(m: np.ndarray) -> np.ndarray:
        u, s, vh = np.linalg.svd(m)
        rank = int(np.sum(s > tol * max(1.0, s[0] if len(s) else 1.0)))
        return vh[rank:].T

    kernels = [np.zeros((n, 0))] + [nullspace(powers[k]) for k in range(1, depth + 1)]
    chains: list[list[np.ndarray]] = []
    accumulated = np.zeros((n, 0))
    for k in range(depth, 0, -1):
        # chain tops of height k: ker(N^k) modulo ker(N^{k-1}) + existing vectors
        span = np.column_stack([kernels[k - 1], accumulated]) if (
            kernels[k - 1].shape[1] + accumulated.shape[1]
        ) else np.zeros((n, 0))
        basis_k = kernels[k]
        if span.shape[1]:
            q, _ = np.linalg.qr(span)
            proj = basis_k - q @ (q.T @ basis_k)
        else:
            proj = basis_k
        u, s, _ = np.linalg.svd(proj, full_matrices=False) if proj.shape[1] else (
            np.zeros((n, 0)),
            np.zeros(0),
            None,
        )
        tops = u[:, s > 0.5 * max(1.0, 1.0) * tol * 10] if len(s) else u
        tops = u[:, : int(np.sum(s > 1e-7))]
        for c in range(tops.shape[1]):
            top = tops[:, c]
            chain = [top]
            for _ in range(k - 1):
                chain.append(nil @ chain[-1])
            chains.append(chain)
            accumulated = np.column_stack([accumulated] + chain)
    total = sum(len(c) for c in chains)
    if total != n:
        return None
    cols = []
    for chain in chains:
        cols.extend(reversed(chain))  # bottom of chain first: N maps col j -> col j-1
    basis = np.column_stack(cols)
    if np.linalg.cond(basis) > 1e12:
        return None
    return basis


def _refine_cluster_block(b: np.ndarray, tol: float) -> tuple[np.ndarray, list[np.ndarray], list[str]]:
    """Split or canonicalize one cluster's diagonal block."""
    n = b.shape[0]
    if n == 1:
        return np.eye(1), [b.copy()], ["real"]
    # try the semisimple split first
    semi = _from_eigenvectors(b)
    if semi is not None and semi.condition() < 1e7:
        return semi.transform, semi.blocks, semi.kinds
    w = np.linalg.eigvals(b)
    lam = complex(np.mean(w))
    if abs(lam.imag) <= 1e-10 * max(1.0, abs(lam)):
        nil = b - lam.real * np.eye(n)
        chain_tol = tol * max(1.0, np.linalg.norm(b))
        basis = _jordan_chains(nil, chain_tol)
        if basis is not None:
            j = np.linalg.solve(basis, b @ basis)
            # scrub round-off: keep diagonal + superdiagonal structure
            clean = np.zeros_like(j)
            np.fill_diagonal(clean, lam.real)
            for i in range(n - 1):
                clean[i, i + 1] = 1.0 if abs(j[i, i + 1]) > 0.5 else 0.0
            if np.linalg.norm(j - clean) <= 1e-6 * max(1.0, np.linalg.norm(b)):
                blocks, kinds, sizes = [], [], []
                start = 0
                for i in range(n):
                    if i == n - 1 or clean[i, i + 1] == 0.0:
                        size = i - start + 1
                        blocks.append(clean[start : i + 1, start : i + 1].copy())
                        kinds.append("bidiagonal" if size > 1 else "real")
                        sizes.append(size)
                        start = i + 1
                return basis, blocks, kinds
    # last resort: keep the cluster as one triangular block
    return np.eye(n), [b.copy()], ["triangular"]


def _schur_cluster_path(a: np.ndarray, config: KernelConfig) -> BlockDecomposition:
    """Cluster-reordered real Schur form, Sylvester-decoupled per cluster."""
    n = a.shape[0]
    w = np.linalg.eigvals(a)
    clusters = _cluster_indices(w, config.cluster_tol)
    # representative value per cluster, processed in a deterministic order
    reps = [complex(np.mean(w[idx])) for idx in clusters]
    order = sorted(range(len(clusters)), key=lambda i: (reps[i].real, abs(reps[i].imag)))

    z_total = np.eye(n)
    s = a.copy()
    offset = 0
    sizes: list[int] = []
    for ci in order:
        rep = reps[ci]
        sub = s[offset:, offset:]

        def select(wr, wi, rep=rep):
            lam = wr + 1j * wi
            return (
                abs(lam - rep) <= 2 * config.cluster_tol * max(1.0, abs(rep))
                or abs(lam - np.conj(rep)) <= 2 * config.cluster_tol * max(1.0, abs(rep))
            )

        ss, zz, ndim = scipy.linalg.schur(sub, output="real", sort=select)
        s[offset:, offset:] = ss
        s[:offset, offset:] = s[:offset, offset:] @ zz
        z_big = np.eye(n)
        z_big[offset:, offset:] = zz
        z_total = z_total @ z_big
        sizes.append(int(ndim))
        offset += int(ndim)
    sizes = [k for k in sizes if k > 0]

    # decouple the off-diagonal coupling blocks with Sylvester solves
    t = z_total
    starts = np.cumsum([0] + sizes)
    for bi in range(len(sizes) - 1, -1, -1):
        for bj in range(bi + 1, len(sizes)):
            r0, r1 = starts[bi], starts[bi + 1]
            c0, c1 = starts[bj], starts[bj + 1]
            coupling = s[r0:r1, c0:c1]
            if np.linalg.norm(coupling) == 0.0:
                continue
            x = scipy.linalg.solve_sylvester(s[r0:r1, r0:r1], -s[c0:c1, c0:c1], -coupling)
            # similarity by [[I, X], [0, I]] zeroes the coupling
            g = np.eye(n)
            g[r0:r1, c0:c1] = x
            g_inv = np.eye(n)
            g_inv[r0:r1, c0:c1] = -x
            s = g_inv @ s @ g
            t = t @ g
    s[np.abs(s) < 1e-14 * max(1.0, np.linalg.norm(a))] = 0.0

    blocks: list[np.ndarray] = []
    kinds: list[str] = []
    cols: list[np.ndarray] = []
    for bi, size in enumerate(sizes):
        r0, r1 = starts[bi], starts[bi + 1]
        local_t, local_blocks, local_kinds = _refine_cluster_block(
            s[r0:r1, r0:r1], config.cluster_tol
        )
        cols.append(t[:, r0:r1] @ local_t)
        blocks.extend(local_blocks)
        kinds.extend(local_kinds)
    return BlockDecomposition(np.column_stack(cols), blocks, kinds)


def real_block_decompose(
    a: np.ndarray, config: KernelConfig = DEFAULT_CONFIG
) -> BlockDecomposition:
    """Real block-eigenvalue decomposition with eigenvalue clustering.

    Produces ``a = T @ blockdiag(L_1..L_K) @ inv(T)`` where every block is a
    real eigenvalue, a 2x2 rotation-scaling block for a complex pair, or a
    bidiagonal chain for a defective cluster.  Raises
    :class:`IllConditionedDecompositionError` when no transform with
    condition below ``config.condition_limit`` is found.
    """
    a = _as_square(a)
    n = a.shape[0]
    if n == 0:
        return BlockDecomposition(np.eye(0), [], [])

    candidates: list[BlockDecomposition] = []
    semi = _from_eigenvectors(a)
    if semi is not None:
        candidates.append(semi)
    if semi is None or semi.condition() > config.defective_switch:
        try:
            candidates.append(_schur_cluster_path(a, config))
        except Exception:
            pass

    scale = max(np.linalg.norm(a), 1e-300)
    best: BlockDecomposition | None = None
    best_cond = np.inf
    for cand in candidates:
        cond = cand.condition()
        if not np.isfinite(cond):
            continue
        resid = np.linalg.norm(cand.reconstruct() - a) / scale
        if resid <= config.reconstruction_tol and cond < best_cond:
            best, best_cond = cand, cond
    if best is None:
        worst = min((c.condition() for c in candidates), default=np.inf)
        raise IllConditionedDecompositionError(worst)
    if best_cond > config.condition_limit:
        raise IllConditionedDecompositionError(best_cond)
    return best
