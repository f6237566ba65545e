"""Band structure of unitary walks: dispersion, velocities, caustics.

A unitary walk W(p) = sum_k exp(i w_k(p)) P_k(p) has eigenphase branches
w_k (the dispersion relation) whose gradients are group velocities; the
distribution of the group-velocity operator in the initial state is the
ballistic limit law of Q(t)/t.  This module computes

* :func:`dispersion` — batched eigendecomposition over a momentum grid
  with branch matching by eigenvector overlap and a continuous phase lift,
* :func:`group_velocity` — exact Hellmann-Feynman velocities from the
  trigonometric-polynomial derivative of W,
* :func:`ballistic_density_unitary` — binned pushforward of the momentum
  measure under p -> v_k(p),
* :func:`jacobian_density_1d` — pointwise asymptotic density via the
  change-of-variables formula summed over preimages,
* :func:`caustics` — velocities where the density diverges (vanishing
  curvature of a branch),
* :func:`hadamard_correction` — the closed-form 1/t-corrected density of
  the Hadamard walk started at the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import brentq, linear_sum_assignment

from .models import InitialState
from .trigpoly import TrigPolyMatrix, check_unitary

__all__ = [
    "DispersionData",
    "BallisticDensity",
    "CausticPoint",
    "dispersion",
    "group_velocity",
    "ballistic_density_unitary",
    "jacobian_density_1d",
    "caustics",
    "hadamard_correction",
]

DEGENERACY_TOL = 1e-8
FLAT_TOL = 1e-10
DEFAULT_GRID_1D = 4096
DEFAULT_GRID_2D = 256


# ----------------------------------------------------------------------
# data container
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class DispersionData:
    """Eigenphase branches of a unitary walk on a uniform momentum grid.

    Attributes
    ----------
    axes : tuple of ndarray
        Per-axis momentum grids covering (-pi, pi], N points each.
    omega : ndarray, shape grid + (d,)
        Continuous phase lift of the eigenphases, branch-resolved.
    vectors : ndarray, shape grid + (d, d)
        Orthonormal eigenvectors; ``vectors[..., :, k]`` belongs to branch k.
    regular : ndarray of bool, shape grid
        True where the minimal eigenphase gap exceeds ``degeneracy_tol``.
    velocity : ndarray or None, shape grid + (d, s)
        Group velocities per branch and axis, NaN at irregular points;
        filled by :func:`group_velocity`.
    walk : TrigPolyMatrix
        The walk operator the data was computed from (used by refinement).
    degeneracy_tol : float
        Gap threshold used for the regularity flags.
    """

    axes: tuple[NDArray[np.float64], ...]
    omega: NDArray[np.float64]
    vectors: NDArray[np.complex128]
    regular: NDArray[np.bool_]
    walk: TrigPolyMatrix
    velocity: NDArray[np.float64] | None = None
    degeneracy_tol: float = DEGENERACY_TOL

    @property
    def lattice_dim(self) -> int:
        return len(self.axes)

    @property
    def coin_dim(self) -> int:
        return self.omega.shape[-1]

    @property
    def projectors(self) -> NDArray[np.complex128]:
        """Spectral projectors P_k = phi_k phi_k*, shape grid + (d, d, d).

        The first trailing axis indexes the branch; at every grid point the
        projectors resolve the identity because the eigenvector matrix is
        unitary.
        """
        v = np.moveaxis(self.vectors, -1, -2)  # grid + (k, d)
        return v[..., :, None] * v.conj()[..., None, :]


@dataclass(frozen=True)
class BallisticDensity:
    """Histogram estimate of the asymptotic law of Q(t)/t.

    ``density`` is mass per unit velocity volume; ``flagged_mass`` is the
    momentum measure of irregular (near-degenerate) points excluded from
    the pushforward, which bounds the missing probability.
    """

    bin_edges: tuple[NDArray[np.float64], ...]
    density: NDArray[np.float64]
    flagged_mass: float

    @property
    def total_mass(self) -> float:
        widths = [np.diff(e) for e in self.bin_edges]
        vol = widths[0]
        for w in widths[1:]:
            vol = np.multiply.outer(vol, w)
        return float(np.sum(self.density * vol))

    @property
    def centers(self) -> tuple[NDArray[np.float64], ...]:
        return tuple(0.5 * (e[1:] + e[:-1]) for e in self.bin_edges)


@dataclass(frozen=True)
class CausticPoint:
    """A momentum/branch pair where the dispersion curvature vanishes."""

    momentum: tuple[float, ...]
    branch: int
    velocity: tuple[float, ...]


# ----------------------------------------------------------------------
# dispersion
# ----------------------------------------------------------------------

def _bz_axis(n: int) -> NDArray[np.float64]:
    return -np.pi + 2.0 * np.pi * np.arange(1, n + 1) / n


def _match_step(
    v_prev: NDArray[np.complex128], v_next: NDArray[np.complex128]
) -> NDArray[np.intp]:
    """Branch permutation maximizing total squared eigenvector overlap."""
    overlap = np.abs(v_prev.conj().T @ v_next) ** 2
    rows, cols = linear_sum_assignment(-overlap)
    perm = np.empty(v_prev.shape[1], dtype=np.intp)
    perm[rows] = cols
    return perm


def _circular_gap(phases: NDArray[np.float64]) -> NDArray[np.float64]:
    """Minimal pairwise gap of phases on the circle, batched on axis 0."""
    srt = np.sort(phases, axis=-1)
    diffs = np.diff(srt, axis=-1)
    wrap = 2.0 * np.pi - (srt[..., -1] - srt[..., 0])
    if diffs.shape[-1] == 0:
        return np.full(phases.shape[:-1], 2.0 * np.pi)
    return np.minimum(diffs.min(axis=-1), wrap)


def dispersion(walk: TrigPolyMatrix, n_grid: int | None = None) -> DispersionData:
    """Eigenphase branches of a unitary walk over the Brillouin zone.

    Branches are matched between neighboring grid points by maximal
    eigenvector overlap (stable through avoided crossings, where phase
    ordering would swap branches) and the phases are unwrapped to a
    continuous lift along a spanning tree of the grid.  Points whose
    minimal eigenphase gap is below ``DEGENERACY_TOL`` are flagged
    irregular; velocities and densities are never assigned there.
    """
    rep = check_unitary(walk)
    if not rep:
        raise ValueError(
            f"dispersion requires a unitary walk (deviation {rep.max_deviation:.2e})"
        )
    s, d = walk.lattice_dim, walk.coin_dim
    if s not in (1, 2):
        raise ValueError(f"dispersion supports s in {{1, 2}}, got {s}")
    if n_grid is None:
        n_grid = DEFAULT_GRID_1D if s == 1 else DEFAULT_GRID_2D
    if n_grid < 2 * walk.max_degree + 1:
        raise ValueError("grid too coarse for the walk's degree")
    axes = tuple(_bz_axis(n_grid) for _ in range(s))
    w_grid = walk.evaluate_grid(*axes)
    eigvals, eigvecs = np.linalg.eig(w_grid)
    phases = np.angle(eigvals)

    if s == 1:
        order = np.argsort(phases[0])
        phases[0] = phases[0][order]
        eigvecs[0] = eigvecs[0][:, order]
        for i in range(1, n_grid):
            perm = _match_step(eigvecs[i - 1], eigvecs[i])
            phases[i] = phases[i][perm]
            eigvecs[i] = eigvecs[i][:, perm]
        omega = np.unwrap(phases, axis=0)
    else:
        order = np.argsort(phases[0, 0])
        phases[0, 0] = phases[0, 0][order]
        eigvecs[0, 0] = eigvecs[0, 0][:, order]
        for i in range(1, n_grid):  # first row, sweep axis 0
            perm = _match_step(eigvecs[i - 1, 0], eigvecs[i, 0])
            phases[i, 0] = phases[i, 0][perm]
            eigvecs[i, 0] = eigvecs[i, 0][:, perm]
        for i in range(n_grid):  # every column, sweep axis 1
            for j in range(1, n_grid):
                perm = _match_step(eigvecs[i, j - 1], eigvecs[i, j])
                phases[i, j] = phases[i, j][perm]
                eigvecs[i, j] = eigvecs[i, j][:, perm]
        # spanning tree: first column along axis 0, then each row along axis 1
        omega = np.unwrap(phases, axis=1)
        col0 = np.unwrap(phases[:, 0], axis=0)
        omega += (col0 - omega[:, 0])[:, None, :]

    # orthonormalize in place (QR cleanup; columns stay aligned to branches)
    q, r = np.linalg.qr(eigvecs)
    q = q * np.exp(1j * np.angle(np.einsum("...ii->...i", r)))[..., None, :]
    regular = _circular_gap(phases) > DEGENERACY_TOL
    return DispersionData(
        axes=axes,
        omega=omega,
        vectors=q,
        regular=regular,
        walk=walk,
    )


# ----------------------------------------------------------------------
# group velocity
# ----------------------------------------------------------------------

def group_velocity(data: DispersionData, walk: TrigPolyMatrix | None = None) -> DispersionData:
    """Fill in group velocities v_k(p) = grad w_k(p) by Hellmann-Feynman.

    On a nondegenerate branch, d w_k / d p_a equals the diagonal matrix
    element <phi_k | -i W(p)* dW/dp_a | phi_k>, which is exact (no finite
    differences); the trigonometric-polynomial derivative of W supplies
    dW/dp_a in closed form.  The matrix element is real on unitary input;
    an imaginary residual above 1e-9 at any regular point raises.
    Velocities at irregular (near-degenerate) points are NaN.
    """
    if walk is None:
        walk = data.walk
    s, d = data.lattice_dim, data.coin_dim
    w_grid = walk.evaluate_grid(*data.axes)
    vel = np.empty(data.omega.shape + (s,), dtype=np.float64)
    for a in range(s):
        dw = walk.derivative(a).evaluate_grid(*data.axes)
        gen = np.einsum("...ji,...jk,...kl->...il", w_grid.conj(), dw, data.vectors)
        elem = -1j * np.einsum("...ik,...ik->...k", data.vectors.conj(), gen)
        imag_res = np.abs(elem.imag)[data.regular]
        if imag_res.size and imag_res.max() > 1e-9:
            raise ValueError(
                f"velocity matrix element has imaginary residual "
                f"{imag_res.max():.2e} at a regular point"
            )
        vel[..., a] = elem.real
    vel[~data.regular] = np.nan
    return replace(data, velocity=vel)


def _state_weights(data: DispersionData, rho: InitialState) -> NDArray[np.float64]:
    """Branch weights tr(rho(p) P_k(p)) * cell volume, shape grid + (d,).

    Normalized so that summing over all grid points and branches gives 1
    (the initial momentum density integrates to unit trace).
    """
    s = data.lattice_dim
    if rho.lattice_dim != s or rho.coin_dim != data.coin_dim:
        raise ValueError("initial state does not match the dispersion data")
    n = data.axes[0].size
    cell = (2.0 * np.pi / n) ** s
    if rho.is_pure:
        psi = rho.momentum_amplitude(*data.axes)  # grid + (d,)
        amp = np.einsum("...ik,...i->...k", data.vectors.conj(), psi)
        w = np.abs(amp) ** 2 / (2.0 * np.pi) ** s
    else:
        rho_grid = rho.density_on_grid(data.axes[0])
        w = np.einsum(
            "...ik,...ij,...jk->...k", data.vectors.conj(), rho_grid, data.vectors
        ).real
    return w * cell


def ballistic_density_unitary(
    data: DispersionData, rho: InitialState, bins: int = 256
) -> BallisticDensity:
    """Histogram pushforward of the momentum measure under p -> v_k(p).

    This is the weak limit of Q(t)/t: each regular grid point contributes
    its branch weights tr(rho(p) P_k(p)) dp/(2 pi)^s at velocity v_k(p).
    Mass sitting on irregular points is excluded and reported as
    ``flagged_mass``; the histogram total is 1 minus that, up to
    quadrature error below 1e-6.
    """
    if data.velocity is None:
        raise ValueError("velocities not computed; call group_velocity first")
    s = data.lattice_dim
    w = _state_weights(data, rho)
    ok = np.broadcast_to(data.regular[..., None], w.shape)
    flagged = float(w[~ok].sum())
    vels = data.velocity.reshape(-1, data.coin_dim, s)
    wts = w.reshape(-1, data.coin_dim)
    mask = data.regular.reshape(-1)
    vels = vels[mask].reshape(-1, s)
    wts = wts[mask].reshape(-1)
    pad = 1e-9 + 0.5 / bins
    edges = []
    for a in range(s):
        lo, hi = vels[:, a].min(), vels[:, a].max()
        span = max(hi - lo, 1e-12)
        edges.append(np.linspace(lo - pad * span, hi + pad * span, bins + 1))
    if s == 1:
        hist, e0 = np.histogram(vels[:, 0], bins=edges[0], weights=wts)
        widths = np.diff(e0)
        return BallisticDensity((e0,), hist / widths, flagged)
    hist, e0, e1 = np.histogram2d(
        vels[:, 0], vels[:, 1], bins=[edges[0], edges[1]], weights=wts
    )
    area = np.outer(np.diff(e0), np.diff(e1))
    return BallisticDensity((e0, e1), hist / area, flagged)


# ----------------------------------------------------------------------
# pointwise 1D density via change of variables
# ----------------------------------------------------------------------

def _branch_velocity_at(
    data: DispersionData, p: float, branch: int, anchor: NDArray[np.complex128]
) -> tuple[float, NDArray[np.complex128]]:
    """Exact velocity and eigenvector of one branch at an off-grid momentum.

    The branch is identified by maximal overlap with ``anchor`` (the
    eigenvector at a nearby grid point), then the Hellmann-Feynman matrix
    element gives the velocity.
    """
    walk = data.walk
    w = walk.evaluate(p)
    vals, vecs = np.linalg.eig(w)
    k = int(np.argmax(np.abs(vecs.conj().T @ anchor)))
    phi = vecs[:, k]
    phi = phi / np.linalg.norm(phi)
    dw = walk.derivative(0).evaluate(p)
    elem = -1j * (phi.conj() @ (w.conj().T @ dw @ phi))
    return float(elem.real), phi


def _refine_root(f, a: float, b: float) -> float:
    """Root of f in [a, b] flagged by a grid sign change.

    Handles roots that sit (to rounding) exactly on a bracket endpoint,
    where the recomputed endpoint values may fail to straddle zero.
    """
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb < 0.0:
        return brentq(f, a, b, xtol=1e-12, rtol=8.9e-16)
    small = min(abs(fa), abs(fb))
    if small < 1e-8:
        return a if abs(fa) <= abs(fb) else b
    raise ValueError("sign change on grid not confirmed by exact evaluation")


def jacobian_density_1d(
    data: DispersionData,
    rho: InitialState,
    v_query: float,
    caustic_tol: float = 1e-6,
) -> float:
    """Asymptotic density of Q(t)/t at ``v_query`` for a 1D unitary walk.

    Sums tr(rho(p*) P_k(p*)) / |v_k'(p*)| over all preimages p* of the
    query velocity on every branch.  Preimages are bracketed by sign
    changes of v_k - v_query on the grid and refined by root finding on
    the exact Hellmann-Feynman velocity to 1e-10.  A query within
    ``caustic_tol`` of a vanishing-derivative point raises, since the
    density diverges there.
    """
    if data.lattice_dim != 1:
        raise ValueError("jacobian_density_1d requires s=1 data")
    if data.velocity is None:
        raise ValueError("velocities not computed; call group_velocity first")
    axis = data.axes[0]
    n = axis.size
    step = 2.0 * np.pi / n
    total = 0.0
    if rho.is_pure:
        rho_of = None
    else:
        rho_grid = rho.density_on_grid(axis)
    for k in range(data.coin_dim):
        v = data.velocity[:, k, 0]
        if np.nanmax(np.abs(np.diff(v))) < FLAT_TOL:
            # flat branch: point mass, contributes nothing at other queries
            if abs(float(np.nanmean(v)) - v_query) < caustic_tol:
                raise ValueError(
                    "query lies on a flat branch (point mass, density singular)"
                )
            continue
        g = v - v_query
        found: list[float] = []
        for i in range(n):
            j = (i + 1) % n
            gi, gj = g[i], g[j]
            if np.isnan(gi) or np.isnan(gj):
                continue
            if not (gi == 0.0 or gi * gj < 0.0):
                continue
            anchor = data.vectors[i, :, k]

            def f(p, _k=k, _anchor=anchor):
                return _branch_velocity_at(data, p, _k, _anchor)[0] - v_query

            p_star = _refine_root(f, float(axis[i]), float(axis[i] + step))
            if any(abs(p_star - q) < 1e-9 for q in found):
                continue
            found.append(p_star)
            v_star, phi = _branch_velocity_at(data, p_star, k, anchor)
            h = 1e-6
            vp = (
                _branch_velocity_at(data, p_star + h, k, phi)[0]
                - _branch_velocity_at(data, p_star - h, k, phi)[0]
            ) / (2.0 * h)
            if abs(vp) < caustic_tol:
                raise ValueError(
                    f"velocity {v_query} is within {caustic_tol} of a caustic "
                    f"(v' = {vp:.2e} at p = {p_star:.6f}); density diverges"
                )
            if rho.is_pure:
                psi = rho.momentum_amplitude(np.array([p_star]))[0]
                weight = float(np.abs(phi.conj() @ psi) ** 2) / (2.0 * np.pi)
            else:
                idx = int(np.argmin(np.abs(axis - p_star)))
                weight = float((phi.conj() @ rho_grid[idx] @ phi).real)
            total += weight / abs(vp)
    return total


# ----------------------------------------------------------------------
# caustics
# ----------------------------------------------------------------------

def caustics(data: DispersionData, tol: float = 1e-10) -> list[CausticPoint]:
    """Momenta where a dispersion branch has singular curvature.

    1D: locations with v_k'(p) = 0, found by sign changes of the finite
    difference on the grid and refined by root finding on the exact
    velocity derivative.  Branches that are flat to within ``FLAT_TOL``
    over the whole zone (pure shifts) carry a transported point mass, not
    a caustic, and are skipped.

    2D: grid cells where det(Hessian w_k), estimated by central
    differences of the velocity field, changes sign among the cell
    corners; cell centers are returned (resolution limited by the grid).
    """
    if data.velocity is None:
        raise ValueError("velocities not computed; call group_velocity first")
    out: list[CausticPoint] = []
    if data.lattice_dim == 1:
        axis = data.axes[0]
        n = axis.size
        step = 2.0 * np.pi / n
        for k in range(data.coin_dim):
            v = data.velocity[:, k, 0]
            dv = (np.roll(v, -1) - np.roll(v, 1)) / (2.0 * step)
            if np.nanmax(np.abs(dv)) < max(FLAT_TOL, tol):
                continue  # identically flat branch: no caustic
            for i in range(n):
                j = (i + 1) % n
                a, b = dv[i], dv[j]
                if np.isnan(a) or np.isnan(b) or not (a == 0.0 or a * b < 0.0):
                    continue
                anchor = data.vectors[i, :, k]

                def fprime(p, _k=k, _anchor=anchor):
                    h = 1e-6
                    return (
                        _branch_velocity_at(data, p + h, _k, _anchor)[0]
                        - _branch_velocity_at(data, p - h, _k, _anchor)[0]
                    ) / (2.0 * h)

                try:
                    p_star = _refine_root(
                        fprime, float(axis[i]), float(axis[i] + step)
                    )
                except ValueError:
                    continue  # grid sign change not confirmed pointwise
                v_star, _ = _branch_velocity_at(data, p_star, k, anchor)
                if not any(
                    c.branch == k and abs(c.momentum[0] - p_star) < 2 * step
                    for c in out
                ):
                    out.append(CausticPoint((p_star,), k, (v_star,)))
        return out

    # 2D: determinant of the Hessian via central differences of v
    n = data.axes[0].size
    step = 2.0 * np.pi / n
    for k in range(data.coin_dim):
        v = data.velocity[:, :, k, :]  # (n, n, 2)
        d11 = (np.roll(v[..., 0], -1, 0) - np.roll(v[..., 0], 1, 0)) / (2 * step)
        d22 = (np.roll(v[..., 1], -1, 1) - np.roll(v[..., 1], 1, 1)) / (2 * step)
        d12 = (np.roll(v[..., 0], -1, 1) - np.roll(v[..., 0], 1, 1)) / (2 * step)
        det = d11 * d22 - d12 * d12
        if np.nanmax(np.abs(det)) < max(FLAT_TOL, tol):
            continue
        corners = [det, np.roll(det, -1, 0), np.roll(det, -1, 1),
                   np.roll(np.roll(det, -1, 0), -1, 1)]
        stacked = np.stack(corners)
        sign_change = (np.nanmin(stacked, 0) < -tol) & (np.nanmax(stacked, 0) > tol)
        finite = ~np.isnan(stacked).any(axis=0)
        ii, jj = np.nonzero(sign_change & finite)
        for i, j in zip(ii, jj):
            p1 = data.axes[0][i] + 0.5 * step
            p2 = data.axes[1][j] + 0.5 * step
            vel = tuple(float(x) for x in v[i, j])
            out.append(CausticPoint((float(p1), float(p2)), k, vel))
    return out


# ----------------------------------------------------------------------
# Hadamard finite-time correction
# ----------------------------------------------------------------------

def hadamard_correction(t: int, u_query: ArrayLike) -> NDArray[np.float64] | float:
    """Finite-time density of the Hadamard walk from the origin, with 1/t term.

    rho_t(u) = 1 / (pi (1 - u) sqrt(1 - 2 u^2))
             + (1/t) * u / (pi sqrt(1 - 2 u^2)^3),

    valid for |u| < 1/sqrt(2); the correction integrates to zero, and as
    t -> infinity the leading term remains.  The sign of the 1/t term is
    that of the coin-first composition ``shift_1d() @ coin`` started in
    (1, 0): the shift-first walk built by :func:`~latticewalk.models.
    hadamard_walk` obeys the same leading-order law but carries this term
    with the opposite sign, because the two compositions differ by a single
    lattice displacement -- an O(1/t) effect in ballistic scaling.  Tested
    against kernels supported away from the caustic velocities at
    +-1/sqrt(2), the corrected density tracks the exact coin-first law to
    o(1/t) once the lattice-scale oscillation has been averaged out
    (t >= 20 or so); at smaller t the neglected orders still dominate the
    1/t term.
    """
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    u = np.asarray(u_query, dtype=np.float64)
    if np.any(1.0 - 2.0 * u * u <= 0.0):
        raise ValueError("query outside the support |u| < 1/sqrt(2)")
    root = np.sqrt(1.0 - 2.0 * u * u)
    lead = 1.0 / (np.pi * (1.0 - u) * root)
    corr = u / (np.pi * root**3) / t
    out = lead + corr
    if np.isscalar(u_query):
        return float(out)
    return out
