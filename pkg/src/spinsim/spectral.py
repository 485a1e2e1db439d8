"""Spectra, level tracking and ground-state couplings versus transverse field."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.optimize import linear_sum_assignment

from . import hamiltonian as ham
from .errors import ConfigError, ConvergenceError, NoCoupledStateError, SizeCapError, TrackingError

COUPLING_THRESHOLD = 1e-8
DEGENERACY_RTOL = 1e-12
TRACK_MIN_OVERLAP = 0.5
TRACK_MAX_REFINE = 8
LANCZOS_MAX_K = 16
LANCZOS_BASIS_BYTES = 1 << 30  # cap on the stored Krylov basis


@dataclass(frozen=True, eq=False)
class SpectrumPoint:
    """Full spectrum at one field value.

    Column 0 of ``vectors`` is the ground state used for ``epsilons``; inside
    a degenerate ground manifold it is the member with the requested parity.
    ``epsilons[e] = |<e| sum_i sy_i |g>|`` with ``epsilons[0] = 0``.
    """

    b_y: float
    energies: np.ndarray
    epsilons: np.ndarray
    vectors: np.ndarray = field(repr=False)
    ground_cluster: int = 1
    threshold: float = COUPLING_THRESHOLD

    @property
    def n(self):
        return int(self.energies.size).bit_length() - 1

    @property
    def ground_vector(self):
        return ham.StateVector(self.n, self.vectors[:, 0])

    @property
    def ground_energy(self):
        return float(self.energies[0])

    @property
    def gaps(self):
        return self.energies - self.energies[0]

    def coupled_levels(self, threshold=None):
        """Indices of excited states above the coupling threshold."""
        thr = self.threshold if threshold is None else threshold
        idx = np.nonzero(self.epsilons > thr)[0]
        return idx[idx >= self.ground_cluster]

    @property
    def coupled_gap(self):
        try:
            return coupled_gap(self)
        except NoCoupledStateError:
            return float("nan")


def _clusters(w, tol):
    bounds = [0]
    for i in range(1, w.size):
        if w[i] - w[i - 1] > tol:
            bounds.append(i)
    bounds.append(w.size)
    return [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]


def _rotate_toward(vs, target):
    """Orthonormal basis of span(vs) whose first vector is along P target.

    Returns ``(basis, weight)`` with ``weight = |P target|``.
    """
    c = vs.conj().T @ target
    weight = float(np.linalg.norm(c))
    if weight <= 1e-14:
        return vs, 0.0
    # first basis vector c/|c|, complete with QR in coefficient space
    k = vs.shape[1]
    seed = np.column_stack([c / weight, np.eye(k, dtype=complex)])
    q, _ = np.linalg.qr(seed)
    q = q[:, :k]
    q[:, 0] *= np.vdot(q[:, 0], c / weight) / abs(np.vdot(q[:, 0], c / weight))
    return vs @ q, weight


def dense_spectrum(params, sector=None, threshold=COUPLING_THRESHOLD):
    """Exact spectrum with ground-state couplings ``epsilon_e``.

    Parameters
    ----------
    params : HamiltonianParams
    sector : {+1, -1, None}
        Parity sector used to pick the ground state when the lowest level is
        degenerate.  Defaults to the sector of the field ground state for
        the sign of ``b_y``.
    threshold : float
        Minimum epsilon for an excited state to count as coupled.
    """
    if params.n > ham.DENSE_MAX_SPINS:
        raise SizeCapError(f"dense spectrum limited to N <= {ham.DENSE_MAX_SPINS}")
    n = params.n
    w, v = np.linalg.eigh(ham.build_dense(params))
    tol = DEGENERACY_RTOL * max(params.scale(), 1e-300)
    clusters = _clusters(w, tol)

    g0, g1 = clusters[0]
    if g1 - g0 > 1:
        if sector is None:
            sector = ham.field_ground_parity(n, 1 if params.b_y >= 0 else -1)
        vs = v[:, g0:g1]
        pv = np.column_stack([ham.apply_parity(vs[:, i], n) for i in range(vs.shape[1])])
        lam, rot = np.linalg.eigh(vs.conj().T @ pv)
        order = np.argsort(-lam * sector, kind="stable")
        v[:, g0:g1] = vs @ rot[:, order]
    v[:, 0] = ham.fix_global_phase(v[:, 0])
    g = v[:, 0]
    vg = ham.apply_field(g, n)

    eps = np.zeros(w.size)
    for lo, hi in clusters:
        if lo == 0:
            lo = 1
            if hi == 1:
                continue
        if hi - lo == 1:
            eps[lo] = abs(np.vdot(v[:, lo], vg))
        else:
            basis, weight = _rotate_toward(v[:, lo:hi], vg)
            v[:, lo:hi] = basis
            eps[lo] = weight
    v = ham.fix_global_phase(v)
    return SpectrumPoint(float(params.b_y), w, eps, v, g1 - g0, threshold)


def dense_eigenvalues(params):
    """All eigenvalues, ascending, by dense diagonalization of two real blocks.

    The gauge ``a -> i**popcount(a)`` makes H real symmetric with
    off-diagonal ``-B_y``; the global spin flip then commutes with it and
    splits the matrix into even and odd halves of size ``2**(N-1)``.
    """
    if params.n > ham.DENSE_MAX_SPINS:
        raise SizeCapError(f"dense spectrum limited to N <= {ham.DENSE_MAX_SPINS}")
    n, dim = params.n, params.dim
    idx = np.arange(dim)
    h = np.zeros((dim, dim))
    h[idx, idx] = params.diagonal
    for i in range(n):
        h[idx, idx ^ (1 << i)] = -params.b_y
    half = idx[: dim // 2]
    flip = half ^ (dim - 1)
    same, cross = h[np.ix_(half, half)], h[np.ix_(half, flip)]
    w = np.concatenate([np.linalg.eigvalsh(same + cross), np.linalg.eigvalsh(same - cross)])
    return np.sort(w)


def coupled_gap(point, threshold=None):
    """Gap from the ground state to the nearest coupled excited state (Hz)."""
    idx = point.coupled_levels(threshold)
    if idx.size == 0:
        raise NoCoupledStateError(f"no excited state coupled to the ground state at B_y={point.b_y}")
    return float(np.min(point.energies[idx] - point.energies[0]))


# --- Lanczos ----------------------------------------------------------------

def lanczos_extremal(params, k=1, which="lowest", v0=None, tol=1e-10, max_iter=None, seed=0):
    """Extremal eigenpairs by Lanczos with full reorthogonalization.

    Only the matrix-free product is used.  If the Krylov space started from
    ``v0`` closes before ``k`` vectors are found (e.g. ``v0`` lies in a
    symmetry sector), the eigenpairs of that invariant subspace are returned.

    Returns
    -------
    values : ndarray, shape (k,)
        Ascending for ``which="lowest"``, descending for ``"highest"``.
    vectors : ndarray, shape (2**N, k)
    """
    if which not in ("lowest", "highest"):
        raise ConfigError(f"which must be 'lowest' or 'highest', got {which!r}")
    if not 1 <= k <= LANCZOS_MAX_K:
        raise ConfigError(f"k must be in [1, {LANCZOS_MAX_K}]")
    n = ham._check_n(params.n, ham.MATFREE_MAX_SPINS)
    dim = 1 << n
    sign = 1.0 if which == "lowest" else -1.0
    scale = max(params.scale(), 1e-300)
    if max_iter is None:
        budget = max(40, LANCZOS_BASIS_BYTES // (16 * dim))
        max_iter = min(dim, max(300, 25 * k), budget)
    max_iter = min(max_iter, dim)

    if v0 is None:
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    else:
        v = np.array(ham._amps(v0), dtype=complex)
    v /= np.linalg.norm(v)

    basis = np.empty((dim, min(max_iter, 32)), dtype=complex, order="F")
    alpha, beta = [], []
    w = np.empty(dim, dtype=complex)
    residuals = None
    theta = s = None
    for j in range(max_iter):
        if j == basis.shape[1]:
            grown = np.empty((dim, min(2 * j, max_iter)), dtype=complex, order="F")
            grown[:, :j] = basis
            basis = grown
        basis[:, j] = v
        ham.apply(params, v, out=w)
        if sign < 0:
            w *= -1.0
        a = np.vdot(v, w).real
        alpha.append(a)
        w -= a * v
        if j:
            w -= beta[-1] * basis[:, j - 1]
        q = basis[:, : j + 1]
        for _ in range(2):
            w -= q @ (w.conj() @ q).conj()
        b = float(np.linalg.norm(w))
        m = j + 1
        closed = b <= 1e-12 * scale or m == dim
        if m >= k and (closed or m % 5 == 0 or m == max_iter):
            t = np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1)
            theta, s = np.linalg.eigh(t)
            kk = min(k, m)
            residuals = b * np.abs(s[-1, :kk])
            if closed or np.all(residuals <= tol * scale):
                vecs = ham.fix_global_phase(q @ s[:, :kk])
                return sign * theta[:kk], vecs
        if closed:
            kk = min(k, m)
            t = np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1)
            theta, s = np.linalg.eigh(t)
            return sign * theta[:kk], ham.fix_global_phase(q @ s[:, :kk])
        beta.append(b)
        v = w / b
        w = np.empty(dim, dtype=complex)
    raise ConvergenceError(
        f"Lanczos did not converge in {max_iter} iterations", residuals=residuals
    )


def lanczos_coupled_gap(params, k=6, v0=None, threshold=COUPLING_THRESHOLD, tol=1e-10):
    """Coupled gap from Lanczos eigenpairs (for N beyond the dense cap).

    With ``v0`` in the field-ground sector (default: the field ground state),
    the Krylov space only contains states the ground state can couple to.
    """
    from .dynamics import initial_state

    if v0 is None:
        v0 = initial_state(params.n, 1 if params.b_y >= 0 else -1)
    vals, vecs = lanczos_extremal(params, k=k, v0=v0, tol=tol)
    g = vecs[:, 0]
    vg = ham.apply_field(g, params.n)
    eps = np.abs(vecs.conj().T @ vg)
    tol_deg = DEGENERACY_RTOL * params.scale()
    ok = [e for e in range(1, vals.size) if eps[e] > threshold and vals[e] - vals[0] > tol_deg]
    if not ok:
        raise NoCoupledStateError(f"no coupled state among {vals.size} Lanczos levels")
    return float(min(vals[e] - vals[0] for e in ok))


# --- sweeps -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LevelSweep:
    """Spectra along a field grid with consistent level labels.

    ``labels[p, l]`` is the eigen-index (energy rank) at point ``p`` of the
    level tracked as ``l``; labels at the first point are the ranks there.
    ``quality[p]`` is the worst matching overlap between points p-1 and p.
    """

    couplings: ham.CouplingMatrix
    points: tuple
    labels: np.ndarray
    quality: np.ndarray

    @property
    def b_y(self):
        return np.array([p.b_y for p in self.points])

    def tracked_energies(self):
        e = np.array([p.energies for p in self.points])
        return np.take_along_axis(e, self.labels, axis=1)

    def tracked_epsilons(self):
        e = np.array([p.epsilons for p in self.points])
        return np.take_along_axis(e, self.labels, axis=1)

    def coupled_gaps(self):
        return np.array([p.coupled_gap for p in self.points])

    def min_coupled_gap(self):
        g = self.coupled_gaps()
        i = int(np.nanargmin(g))
        return float(g[i]), float(self.points[i].b_y)

    def rows(self, j_ref=None):
        """Long-format records, one per (field, tracked level)."""
        if j_ref is None:
            j_ref = abs(self.couplings.j[0, 1]) or 1.0
        energies = self.tracked_energies()
        eps = self.tracked_epsilons()
        out = []
        for p, pt in enumerate(self.points):
            sc = float(np.hypot(pt.b_y, j_ref))
            for lvl in range(energies.shape[1]):
                out.append(
                    {
                        "b_y": pt.b_y,
                        "b_y_over_j1": pt.b_y / j_ref,
                        "level": lvl,
                        "rank": int(self.labels[p, lvl]),
                        "energy": float(energies[p, lvl]),
                        "epsilon": float(eps[p, lvl]),
                        "coupled": bool(
                            eps[p, lvl] > pt.threshold and self.labels[p, lvl] >= pt.ground_cluster
                        ),
                        "scale": sc,
                    }
                )
        return out


def _match(a, b):
    """Assign levels of ``b`` to levels of ``a`` by maximal overlap."""
    ov = np.abs(a.vectors.conj().T @ b.vectors) ** 2
    tol_a = DEGENERACY_RTOL * max(np.abs(a.energies).max(), 1e-300) * 10
    tol_b = DEGENERACY_RTOL * max(np.abs(b.energies).max(), 1e-300) * 10
    eff = ov.copy()
    for lo, hi in _clusters(b.energies, tol_b):
        if hi - lo > 1:
            eff[:, lo:hi] = np.maximum(eff[:, lo:hi], ov[:, lo:hi].sum(axis=1, keepdims=True))
    for lo, hi in _clusters(a.energies, tol_a):
        if hi - lo > 1:
            eff[lo:hi, :] = np.maximum(eff[lo:hi, :], ov[lo:hi, :].sum(axis=0, keepdims=True))
    rows, cols = linear_sum_assignment(-eff)
    perm = np.empty(a.energies.size, dtype=int)
    perm[rows] = cols
    return perm, float(eff[rows, cols].min())


def _spectrum_at(couplings, b, sector, threshold):
    return dense_spectrum(ham.HamiltonianParams(couplings, b), sector=sector, threshold=threshold)


def sweep_levels(couplings, b_grid, threshold=COUPLING_THRESHOLD, sector=None, workers=1):
    """Spectra on a monotone field grid with overlap-tracked level labels.

    Intervals whose best matching overlap falls below 0.5 are bisected up
    to 8 times; if tracking is still ambiguous a :class:`TrackingError`
    names the interval.  Points are computed in parallel when
    ``workers > 1``; tracking is sequential, so results do not depend on it.
    """
    grid = np.asarray(b_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ConfigError("field grid needs at least two points")
    d = np.diff(grid)
    if not (np.all(d >= 0) or np.all(d <= 0)):
        raise ConfigError("field grid must be monotone")
    if sector is None:
        sector = ham.field_ground_parity(couplings.n, 1 if grid[0] >= 0 else -1)

    def compute(b):
        return _spectrum_at(couplings, b, sector, threshold)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            pts = list(ex.map(compute, grid))
    else:
        pts = [compute(b) for b in grid]

    dim = 1 << couplings.n
    points = [pts[0]]
    labels = [np.arange(dim)]
    quality = [1.0]

    def extend(a, b, lab_a, depth):
        if a.b_y == b.b_y:
            perm, q = np.arange(dim), 1.0
        else:
            perm, q = _match(a, b)
        if q < TRACK_MIN_OVERLAP:
            if depth >= TRACK_MAX_REFINE:
                raise TrackingError(
                    f"level tracking ambiguous between B_y={a.b_y} and {b.b_y} "
                    f"(overlap {q:.3f}); refine the grid",
                    interval=(a.b_y, b.b_y),
                )
            mid = compute(0.5 * (a.b_y + b.b_y))
            lab_m = extend(a, mid, lab_a, depth + 1)
            return extend(mid, b, lab_m, depth + 1)
        lab_b = perm[lab_a]
        points.append(b)
        labels.append(lab_b)
        quality.append(q)
        return lab_b

    lab = labels[0]
    for i in range(1, len(pts)):
        lab = extend(points[-1], pts[i], lab, 0)
    return LevelSweep(couplings, tuple(points), np.array(labels), np.array(quality))


def minimize_coupled_gap(couplings, b_lo, b_hi, points=201, threshold=COUPLING_THRESHOLD, solver="dense"):
    """Minimal coupled gap over ``[b_lo, b_hi]``: grid search then bounded polish.

    ``solver="lanczos"`` evaluates the gap matrix-free (large N).
    Returns ``(gap, b_y)``.
    """
    if solver not in ("dense", "lanczos"):
        raise ConfigError(f"solver must be 'dense' or 'lanczos', got {solver!r}")
    grid = np.linspace(b_lo, b_hi, points)
    base = ham.HamiltonianParams(couplings, 0.0)

    def gap_at(b):
        if solver == "lanczos":
            try:
                return lanczos_coupled_gap(base.with_field(b), k=3, threshold=threshold)
            except NoCoupledStateError:
                return float("nan")
        return _spectrum_at(couplings, b, None, threshold).coupled_gap

    gaps = np.array([gap_at(b) for b in grid])
    i = int(np.nanargmin(gaps))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(
        gap_at, bounds=(lo, hi), method="bounded", options={"xatol": 1e-9 * max(abs(hi), 1.0)}
    )
    if res.fun < gaps[i]:
        return float(res.fun), float(res.x)
    return float(gaps[i]), float(grid[i])


def _nan_list(a):
    return [None if not np.isfinite(x) else float(x) for x in np.ravel(a)]


@dataclass(frozen=True, eq=False)
class LevelTable:
    """Serializable summary of a :class:`LevelSweep` (tracked levels only)."""

    b_y: np.ndarray
    energies: np.ndarray
    epsilons: np.ndarray
    ranks: np.ndarray
    coupled: np.ndarray
    coupled_gap: np.ndarray

    @classmethod
    def from_sweep(cls, sweep):
        eps = sweep.tracked_epsilons()
        thr = np.array([p.threshold for p in sweep.points])[:, None]
        cluster = np.array([p.ground_cluster for p in sweep.points])[:, None]
        coupled = (eps > thr) & (sweep.labels >= cluster)
        return cls(sweep.b_y, sweep.tracked_energies(), sweep.tracked_epsilons(),
                   np.asarray(sweep.labels), coupled, sweep.coupled_gaps())

    def min_coupled_gap(self):
        i = int(np.nanargmin(self.coupled_gap))
        return float(self.coupled_gap[i]), float(self.b_y[i])

    def __eq__(self, other):
        if not isinstance(other, LevelTable):
            return NotImplemented
        return (
            np.array_equal(self.b_y, other.b_y)
            and np.array_equal(self.energies, other.energies)
            and np.array_equal(self.epsilons, other.epsilons)
            and np.array_equal(self.ranks, other.ranks)
            and np.array_equal(self.coupled, other.coupled)
            and np.array_equal(self.coupled_gap, other.coupled_gap, equal_nan=True)
        )

    def rows(self, j_ref):
        out = []
        for p, b in enumerate(self.b_y):
            for lvl in range(self.energies.shape[1]):
                out.append({
                    "b_y": float(b),
                    "b_y_over_j1": float(b) / j_ref,
                    "level": lvl,
                    "rank": int(self.ranks[p, lvl]),
                    "energy": float(self.energies[p, lvl]),
                    "epsilon": float(self.epsilons[p, lvl]),
                    "coupled": bool(self.coupled[p, lvl]),
                })
        return out

    def to_dict(self):
        return {
            "b_y": self.b_y.tolist(),
            "energies": self.energies.tolist(),
            "epsilons": self.epsilons.tolist(),
            "ranks": self.ranks.tolist(),
            "coupled": self.coupled.tolist(),
            "coupled_gap": _nan_list(self.coupled_gap),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.array(d["b_y"], dtype=float),
            np.array(d["energies"], dtype=float),
            np.array(d["epsilons"], dtype=float),
            np.array(d["ranks"], dtype=int),
            np.array(d["coupled"], dtype=bool),
            np.array([np.nan if x is None else x for x in d["coupled_gap"]], dtype=float),
        )
