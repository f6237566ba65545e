"""Exact and Monte Carlo finite-time evolution of lattice walks.

The momentum representation makes one walk step a pointwise matrix
multiplication: psi(p) -> W(p) psi(p).  Because the step size is bounded,
a wavefunction started on finitely many sites stays supported in a ball of
radius t * maxdeg + r0, so a discrete Fourier grid with at least
2*(t*maxdeg + r0) + 1 points per axis carries the evolution without any
truncation error.  This module provides

* :func:`evolve_unitary` — exact evolution of a single unitary walk,
* :func:`simulate_markov` — trajectory sampling of a Markov-controlled
  random-coin walk (each trajectory is an exact unitary evolution for one
  sampled coin sequence),
* :func:`evolve_density_scalar` — exact density-matrix iteration for the
  scalar Kraus families, including the momentum-shift walk,
* :func:`markov_exact_moments` — closed recursion for the exact ensemble
  mean and second moment of the position, used as an independent oracle
  for the Monte Carlo sampler and the asymptotic predictions,
* :func:`moments` — moments of a position distribution in raw, ballistic
  (Q/t), or diffusive (Q/sqrt(t)) scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.fft
from numpy.typing import ArrayLike, NDArray

from ._kernels import advance_batch
from .models import InitialState, MarkovWalkModel, MomentumShiftModel
from .trigpoly import TrigPolyMatrix, check_unitary

__all__ = [
    "PositionDistribution",
    "evolve_unitary",
    "simulate_markov",
    "evolve_density_scalar",
    "markov_exact_moments",
    "moments",
]

_BATCH_SIZE = 512            # trajectories advanced together (fixed: reproducibility)
_MAX_TABLE_BYTES = 1 << 27   # 128 MiB budget for precomputed step-product tables
_WEIGHT_FLOOR = 1e-30        # drop pure FFT roundoff; genuine mass is far above


# ----------------------------------------------------------------------
# position distributions
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class PositionDistribution:
    """A probability distribution over lattice sites at a fixed time.

    Attributes
    ----------
    time : int
        Number of walk steps taken.
    sites : ndarray, shape (n, s)
        Integer lattice points carrying the listed weights.
    weights : ndarray, shape (n,)
        Nonnegative probabilities summing to 1 (within 1e-9 for exact
        evolutions, within three aggregate standard errors for Monte Carlo).
    lattice_dim : int
        Spatial dimension s.
    stderr : ndarray or None
        Per-site standard error of the weight (Monte Carlo only).
    trajectories : int or None
        Number of Monte Carlo trajectories averaged, if applicable.
    """

    time: int
    sites: NDArray[np.int64]
    weights: NDArray[np.float64]
    lattice_dim: int
    stderr: NDArray[np.float64] | None = None
    trajectories: int | None = None

    def __post_init__(self) -> None:
        sites = np.atleast_2d(np.asarray(self.sites, dtype=np.int64))
        if sites.shape[0] == 1 and sites.shape[1] != self.lattice_dim:
            sites = sites.T
        weights = np.asarray(self.weights, dtype=np.float64)
        if sites.shape != (weights.size, self.lattice_dim):
            raise ValueError(
                f"sites shape {sites.shape} does not match "
                f"{weights.size} weights in dimension {self.lattice_dim}"
            )
        if weights.size == 0:
            raise ValueError("empty distribution")
        if weights.min() < -1e-12:
            raise ValueError(f"negative weight {weights.min():.2e}")
        weights = np.clip(weights, 0.0, None)
        tol = 1e-9
        if self.stderr is not None:
            agg = float(np.sqrt(np.sum(np.square(self.stderr))))
            tol = max(tol, 3.0 * agg)
        total = float(weights.sum())
        if abs(total - 1.0) > tol:
            raise ValueError(f"total probability {total!r} outside 1 +/- {tol:.2e}")
        sites.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "weights", weights)
        if self.stderr is not None:
            err = np.asarray(self.stderr, dtype=np.float64)
            err.setflags(write=False)
            object.__setattr__(self, "stderr", err)

    @property
    def probs(self) -> dict:
        """Mapping from site (int for s=1, tuple otherwise) to probability."""
        if self.lattice_dim == 1:
            return {int(x[0]): float(w) for x, w in zip(self.sites, self.weights)}
        return {tuple(int(v) for v in x): float(w)
                for x, w in zip(self.sites, self.weights)}

    def scaled_sites(self, scaling: str | None = None) -> NDArray[np.float64]:
        """Site coordinates in raw, ballistic (x/t), or diffusive (x/sqrt t) units."""
        x = self.sites.astype(np.float64)
        key = _normalize_scaling(scaling)
        if key == "none" or self.time == 0:
            return x
        if key == "ballistic":
            return x / self.time
        return x / math.sqrt(self.time)

    def smoothed_density(
        self,
        grid: ArrayLike,
        sigma: float,
        scaling: str | None = None,
    ) -> NDArray[np.float64]:
        """Gaussian-kernel density estimate of the (scaled) distribution.

        Convolves the point measure sum_x w_x delta(u - x_scaled) with a
        normal kernel of width ``sigma`` and evaluates on ``grid`` (1D) or
        on a stack of points of shape (n, 2) (2D, product kernel).
        """
        if sigma <= 0.0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        pts = self.scaled_sites(scaling)
        u = np.asarray(grid, dtype=np.float64)
        if self.lattice_dim == 1:
            z = (u.reshape(-1, 1) - pts[:, 0]) / sigma
            dens = np.exp(-0.5 * z * z) @ self.weights
            return dens.reshape(u.shape) / (sigma * math.sqrt(2.0 * math.pi))
        if u.ndim != 2 or u.shape[1] != self.lattice_dim:
            raise ValueError("2D smoothing expects points of shape (n, 2)")
        z2 = np.zeros((u.shape[0], pts.shape[0]))
        for j in range(self.lattice_dim):
            z = (u[:, j].reshape(-1, 1) - pts[:, j]) / sigma
            z2 += z * z
        norm = (sigma * math.sqrt(2.0 * math.pi)) ** self.lattice_dim
        return (np.exp(-0.5 * z2) @ self.weights) / norm


def _normalize_scaling(scaling: str | None) -> str:
    if scaling is None:
        return "none"
    key = str(scaling).lower()
    if key not in ("none", "ballistic", "diffusive"):
        raise ValueError(
            f"scaling must be one of none|ballistic|diffusive, got {scaling!r}"
        )
    return key


def moments(
    dist: PositionDistribution, order: int, scaling: str | None = None
) -> NDArray[np.float64]:
    """Mean vector (order 1) or covariance matrix (order 2) of the position.

    ``scaling`` rescales the coordinates first: ``ballistic`` divides by t,
    ``diffusive`` by sqrt(t).  Shapes are (s,) and (s, s) respectively.
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    x = dist.scaled_sites(scaling)
    w = dist.weights / dist.weights.sum()
    mean = w @ x
    if order == 1:
        return mean
    centered = x - mean
    return np.einsum("n,ni,nj->ij", w, centered, centered)


# ----------------------------------------------------------------------
# FFT plumbing
# ----------------------------------------------------------------------

def _grid_length(t: int, maxdeg: int, radius: int) -> int:
    """Smallest fast FFT length carrying the time-t support exactly."""
    return scipy.fft.next_fast_len(2 * (t * maxdeg + radius) + 1)


def _fft_sites(n: int) -> NDArray[np.int64]:
    """Lattice site labels of the length-n DFT bins (0, 1, ..., -1 order)."""
    return np.fft.fftfreq(n, 1.0 / n).astype(np.int64)


def _momentum_axes(lengths: Sequence[int]) -> list[NDArray[np.float64]]:
    return [2.0 * np.pi * np.arange(n) / n for n in lengths]


def _site_probabilities(psi_hat: NDArray[np.complex128]) -> NDArray[np.float64]:
    """Per-site probabilities from a momentum wavefunction, last axis = coin."""
    grid_shape = psi_hat.shape[:-1]
    axes = tuple(range(len(grid_shape)))
    psi = scipy.fft.fftn(psi_hat, axes=axes) / np.prod(grid_shape)
    return np.sum(np.abs(psi) ** 2, axis=-1)


def _support_mask(lengths: Sequence[int], bound: int) -> NDArray[np.bool_]:
    """True on DFT bins whose site label lies within the support ball."""
    mask = np.ones(tuple(lengths), dtype=bool)
    for ax, n in enumerate(lengths):
        sites = np.abs(_fft_sites(n)) <= bound
        shape = [1] * len(lengths)
        shape[ax] = n
        mask &= sites.reshape(shape)
    return mask


# ----------------------------------------------------------------------
# exact unitary evolution
# ----------------------------------------------------------------------

def evolve_unitary(
    walk: TrigPolyMatrix,
    psi0: InitialState,
    t: int,
    memory_cap_mb: float = 4096.0,
) -> PositionDistribution:
    """Evolve a pure state exactly for t steps of a unitary walk.

    The state is transformed to momentum space, multiplied by W(p) t times
    on a grid fine enough that the discrete Fourier transform is exact for
    the final support, and read back; there is no truncation error.

    Raises
    ------
    ValueError
        If the walk is not unitary, the state is not pure, t is negative,
        or the required grid would exceed ``memory_cap_mb``.
    """
    if t < 0 or t != int(t):
        raise ValueError(f"t must be a nonnegative integer, got {t}")
    if not psi0.is_pure:
        raise ValueError("evolve_unitary requires a pure initial state")
    if psi0.lattice_dim != walk.lattice_dim or psi0.coin_dim != walk.coin_dim:
        raise ValueError("initial state and walk dimensions do not match")
    rep = check_unitary(walk)
    if not rep:
        raise ValueError(
            f"walk is not unitary (normalization deviation {rep.max_deviation:.2e})"
        )
    t = int(t)
    s, d = walk.lattice_dim, walk.coin_dim
    n = _grid_length(t, walk.max_degree, psi0.radius)
    lengths = [n] * s
    est_bytes = np.prod(lengths) * (d * d + 2 * d) * 16
    if est_bytes > memory_cap_mb * 2**20:
        raise ValueError(
            f"momentum grid would need ~{est_bytes / 2**20:.0f} MiB "
            f"(cap {memory_cap_mb:.0f} MiB); raise memory_cap_mb to proceed"
        )
    axes = _momentum_axes(lengths)
    psi = psi0.momentum_amplitude(*axes)
    if t > 0:
        w_grid = walk.evaluate_grid(*axes)
        for _ in range(t):
            psi = np.einsum("...ij,...j->...i", w_grid, psi)
    probs = _site_probabilities(psi)
    bound = t * walk.max_degree + psi0.radius
    keep = _support_mask(lengths, bound)
    probs = np.where(keep, probs, 0.0)
    site_axes = [_fft_sites(m) for m in lengths]
    mesh = np.meshgrid(*site_axes, indexing="ij")
    sites = np.stack([m.ravel() for m in mesh], axis=1)
    flat = probs.ravel()
    nz = flat > _WEIGHT_FLOOR
    return PositionDistribution(t, sites[nz], flat[nz], s)


# ----------------------------------------------------------------------
# Monte Carlo over control trajectories
# ----------------------------------------------------------------------

def _trajectory_paths(
    model: MarkovWalkModel, t: int, seed: int, start: int, count: int
) -> NDArray[np.int8]:
    """Sample ``count`` control-state paths of length t, one RNG per trajectory.

    Trajectory k (globally indexed) uses a counter-based Philox stream keyed
    by (seed, k), so any subset of trajectories can be regenerated
    independently and the result does not depend on batching.
    """
    n_states = model.state_count
    cum_start = np.cumsum(model.control.stationary)
    cum_rows = np.cumsum(model.control.transition, axis=1)
    paths = np.empty((count, max(t, 1)), dtype=np.int8)
    u = np.empty((count, t), dtype=np.float64)
    for k in range(count):
        bitgen = np.random.Philox(key=np.array(
            [np.uint64(seed % (1 << 64)), np.uint64(start + k)], dtype=np.uint64
        ))
        u[k] = np.random.Generator(bitgen).random(t)
    if t == 0:
        return paths[:, :0]
    paths[:, 0] = np.searchsorted(cum_start, u[:, 0], side="right")
    for step in range(1, t):
        cur = paths[:, step - 1]
        nxt = np.empty(count, dtype=np.int8)
        for g in range(n_states):
            sel = cur == g
            if np.any(sel):
                nxt[sel] = np.digitize(u[sel, step], cum_rows[g], right=False)
        paths[:, step] = np.minimum(nxt, n_states - 1)
    return paths[:, :t]


def _build_tables(
    steps: NDArray[np.complex128], block: int
) -> NDArray[np.complex128]:
    """All length-``block`` step products, indexed by base-n digit packing.

    ``steps`` has shape (n_states, N, d, d).  Index sum_r g_r n^r selects the
    product for the step sequence (g_0 first applied, i.e. rightmost factor).
    """
    tables = steps
    for _ in range(block - 1):
        tables = np.einsum("gnij,knjl->gknil", steps, tables).reshape(
            (-1,) + steps.shape[1:]
        )
    return np.ascontiguousarray(tables)


def _choose_block(n_states: int, n_grid: int, d: int) -> int:
    block = 1
    while (
        block < 8
        and n_states ** (block + 1) * n_grid * d * d * 16 <= _MAX_TABLE_BYTES
    ):
        block += 1
    return block


def simulate_markov(
    model: MarkovWalkModel,
    psi0: InitialState,
    t: int,
    n_traj: int,
    seed: int,
    snapshots: Sequence[int] | None = None,
) -> PositionDistribution | list[PositionDistribution]:
    """Monte Carlo average over control trajectories of a unitary-per-state model.

    Each trajectory draws its control path (initial state from the
    stationary law, then chain transitions) and evolves the wavefunction by
    the corresponding product of walk unitaries; the returned distribution
    is the trajectory average with per-site standard errors.  Runs are
    deterministic functions of ``seed`` alone: trajectory k uses a Philox
    stream keyed by (seed, k) regardless of batch layout.

    With ``snapshots`` (sorted times in [0, t]) a list of distributions is
    returned, one per requested time, all from the same trajectory set.

    Raises
    ------
    ValueError
        If the model is not unitary per control state (use the density
        evolvers instead), n_traj < 1, or t < 0.
    """
    if not model.unitary:
        raise ValueError(
            "model has a non-unitary Kraus family; Monte Carlo trajectory "
            "sampling needs one unitary per control state — use "
            "evolve_density_scalar or markov_exact_moments instead"
        )
    if n_traj < 1:
        raise ValueError(f"n_traj must be >= 1, got {n_traj}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if model.lattice_dim != 1:
        raise ValueError("trajectory sampling is implemented for s=1")
    if psi0.lattice_dim != 1 or psi0.coin_dim != model.coin_dim:
        raise ValueError("initial state does not match the model dimensions")
    times = sorted(set(int(v) for v in snapshots)) if snapshots is not None else [t]
    if times and (times[0] < 0 or times[-1] > t):
        raise ValueError("snapshot times must lie in [0, t]")
    if t not in times:
        times.append(t)

    d = model.coin_dim
    maxdeg = model.max_degree
    n = _grid_length(t, maxdeg, psi0.radius)
    axis = _momentum_axes([n])[0]
    steps = np.stack(
        [fam[0].evaluate_grid(axis) for fam in model.channels]
    )  # (n_states, N, d, d)
    block = _choose_block(model.state_count, n, d)
    tables = _build_tables(steps, block)
    packing = (model.state_count ** np.arange(block)).astype(np.int64)

    psi_init = psi0.momentum_amplitude(axis)  # (N, d)
    sum_w = np.zeros((len(times), n))
    sum_w2 = np.zeros((len(times), n))

    done = 0
    while done < n_traj:
        count = min(_BATCH_SIZE, n_traj - done)
        paths = _trajectory_paths(model, t, seed, done, count)
        psi = np.broadcast_to(psi_init, (count, n, d)).copy()
        prev = 0
        for ti, t_snap in enumerate(times):
            seg = paths[:, prev:t_snap]
            n_full = seg.shape[1] // block
            if n_full:
                idx = (
                    seg[:, : n_full * block]
                    .reshape(count, n_full, block)
                    .astype(np.int64)
                    @ packing
                )
                advance_batch(psi, tables, idx)
            tail = seg[:, n_full * block:].astype(np.int64)
            if tail.size:
                advance_batch(psi, steps, tail)
            prev = t_snap
            w = np.sum(
                np.abs(scipy.fft.fft(psi, axis=1) / n) ** 2, axis=2
            )  # (count, N)
            sum_w[ti] += w.sum(axis=0)
            sum_w2[ti] += np.square(w).sum(axis=0)
        done += count

    sites = _fft_sites(n).reshape(-1, 1)
    out: list[PositionDistribution] = []
    for ti, t_snap in enumerate(times):
        mean = sum_w[ti] / n_traj
        bound = t_snap * maxdeg + psi0.radius
        keep = np.abs(sites[:, 0]) <= bound
        mean = np.where(keep, mean, 0.0)
        if n_traj > 1:
            var = (sum_w2[ti] - n_traj * mean**2) / (n_traj - 1)
            err = np.sqrt(np.clip(var, 0.0, None) / n_traj)
            err = np.where(keep, err, 0.0)
        else:
            err = None
        nz = keep & (mean > _WEIGHT_FLOOR)
        out.append(
            PositionDistribution(
                t_snap,
                sites[nz],
                mean[nz],
                1,
                stderr=None if err is None else err[nz],
                trajectories=n_traj,
            )
        )
    if snapshots is None:
        return out[times.index(t)]
    return out


# ----------------------------------------------------------------------
# exact density-matrix evolution for scalar walks
# ----------------------------------------------------------------------

def _scalar_kraus_terms(
    model: MarkovWalkModel | MomentumShiftModel,
) -> tuple[list[dict[int, complex]], float]:
    """Kraus shift coefficients {k: a_k} and the per-step momentum kick q."""
    if isinstance(model, MomentumShiftModel):
        return [{0: 0.5, 1: 0.5}, {0: 0.5, -1: -0.5}], model.q
    if model.coin_dim != 1:
        raise ValueError("density evolution requires coin dimension 1")
    fams: list[dict[int, complex]] = []
    for fam in model.channels:
        for k in fam:
            fams.append(
                {off[0]: complex(mat[0, 0]) for off, mat in k.coeffs.items()}
            )
    if model.state_count != 1:
        raise ValueError("density evolution requires a single control state")
    return fams, 0.0


def evolve_density_scalar(
    model: MarkovWalkModel | MomentumShiftModel,
    rho0: InitialState | Mapping[int, float],
    t: int,
    lattice_radius: int | None = None,
) -> PositionDistribution:
    """Exact Kraus iteration of the position density matrix, coin dimension 1.

    The kernel rho(x, y) is stored on the truncated lattice [-L, L] and
    updated by rho -> sum_i K_i rho K_i* each step; the Kraus operators act
    by coefficient shifts plus (for the momentum-shift walk) the site phase
    exp(-i q x).  ``lattice_radius`` must cover the exact support bound
    t * maxdeg + r0 so that truncation never touches occupied sites.

    ``rho0`` may be a pure scalar initial state or a mapping from sites to
    probabilities (a diagonal kernel).
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    terms, q = _scalar_kraus_terms(model)
    maxdeg = max(max(abs(k) for k in fam) if fam else 0 for fam in terms)
    if isinstance(rho0, InitialState):
        if not rho0.is_pure or rho0.coin_dim != 1 or rho0.lattice_dim != 1:
            raise ValueError("rho0 must be a pure scalar state on Z")
        support = {x[0]: complex(v[0]) for x, v in rho0.amplitudes.items()}
        r0 = max((abs(x) for x in support), default=0)
    else:
        support = {int(x): float(p) for x, p in rho0.items()}
        total = sum(support.values())
        if abs(total - 1.0) > 1e-12 or min(support.values(), default=0.0) < 0.0:
            raise ValueError("diagonal kernel must be a probability distribution")
        r0 = max((abs(x) for x in support), default=0)
    bound = t * maxdeg + r0
    if lattice_radius is None:
        lattice_radius = bound
    if lattice_radius < bound:
        raise ValueError(
            f"lattice_radius {lattice_radius} is below the support bound {bound}"
        )
    length = 2 * lattice_radius + 1
    sites = np.arange(-lattice_radius, lattice_radius + 1)
    rho = np.zeros((length, length), dtype=np.complex128)
    if isinstance(rho0, InitialState):
        psi = np.zeros(length, dtype=np.complex128)
        for x, a in support.items():
            psi[x + lattice_radius] = a
        rho[:] = np.outer(psi, psi.conj())
    else:
        for x, p in support.items():
            rho[x + lattice_radius, x + lattice_radius] = p
    phase = np.exp(-1j * q * sites) if q != 0.0 else None

    def _row_shift(mat: NDArray[np.complex128], k: int) -> NDArray[np.complex128]:
        # (S_k psi)(x) = psi(x - k), zero-padded at the truncation boundary
        out = np.zeros_like(mat)
        if k >= 0:
            out[k:, :] = mat[: length - k, :]
        else:
            out[: length + k, :] = mat[-k:, :]
        return out

    for _ in range(t):
        new = np.zeros_like(rho)
        for fam in terms:
            acted = np.zeros_like(rho)
            for k, a in fam.items():
                acted += a * _row_shift(rho, k)
            if phase is not None:
                acted *= phase[:, None]
            # right-multiply by K^dagger = (columns of the same action)^*
            full = np.zeros_like(rho)
            for k, a in fam.items():
                full += np.conj(a) * _row_shift(acted.T, k).T
            if phase is not None:
                full *= phase.conj()[None, :]
            new += full
        rho = new
        trace_err = abs(float(np.trace(rho).real) - 1.0)
        if trace_err > 1e-10:
            raise RuntimeError(
                f"trace drifted by {trace_err:.2e}; increase lattice_radius"
            )
    diag = np.real(np.diag(rho))
    if diag.min() < -1e-12:
        raise RuntimeError(f"negative diagonal {diag.min():.2e}")
    keep = np.abs(sites) <= bound
    diag = np.where(keep, np.clip(diag, 0.0, None), 0.0)
    nz = diag > _WEIGHT_FLOOR
    if not np.any(nz):
        nz = np.abs(sites) <= r0
    return PositionDistribution(t, sites[nz].reshape(-1, 1), diag[nz], 1)


# ----------------------------------------------------------------------
# exact ensemble moments via the dual recursion
# ----------------------------------------------------------------------

def markov_exact_moments(
    model: MarkovWalkModel,
    psi0: InitialState,
    times: Sequence[int],
    grid_points: int | None = None,
) -> dict[str, NDArray[np.float64]]:
    """Exact ensemble E[Q_t] and E[Q_t^2] for a 1D Markov walk model.

    Works for arbitrary Kraus families (not just unitary ones) by evolving
    the Heisenberg-picture observable fields A_t, together with their first
    and second derivatives with respect to the momentum twist, under

        (Phi A)(g, p)   = sum_h m_g(h) sum_i K_{g,i}(p)* A(h, p) K_{g,i}(p),
        (Phi' A)(g, p)  = ... K_{g,i}(p)* A(h, p) dK_{g,i}/dp,
        (Phi'' A)(g, p) = ... K_{g,i}(p)* A(h, p) d2K_{g,i}/dp2,

    so that with G_{t+1} = Phi(G_t) + Phi'(1) and
    H_{t+1} = Phi(H_t) + Phi'(G_t) + Phi''(1)/2,

        E[Q_t]   = -i Int dp sum_g mbar_g [tr(rho G_t) + tr(rho')],
        E[Q_t^2] = -2 Int dp sum_g mbar_g [tr(rho H_t) + tr(rho' G_t)
                                           + tr(rho'')/2],

    where rho'(p) and rho''(p) are derivatives of the momentum kernel
    rho(p + l, p) in the twist l at l = 0; they carry the initial position
    moments (both vanish for a state concentrated on the origin, and for a
    tabulated diagonal density, whose moments are displacement moments).

    All fields are trigonometric polynomials of degree at most 2 t maxdeg,
    so a uniform grid with more points than that makes the quadrature exact.

    Returns a dict with keys ``times``, ``mean``, ``second_moment``,
    ``variance`` (arrays aligned with the sorted requested times).
    """
    if model.lattice_dim != 1:
        raise ValueError("exact moments are implemented for s=1")
    times_sorted = sorted(set(int(v) for v in times))
    if times_sorted and times_sorted[0] < 0:
        raise ValueError("times must be nonnegative")
    t_max = times_sorted[-1] if times_sorted else 0
    r0 = psi0.radius if psi0.is_pure else 0
    deg = 2 * t_max * model.max_degree + 2 * r0 + 2
    n = grid_points if grid_points is not None else scipy.fft.next_fast_len(deg + 1)
    axis = _momentum_axes([n])[0]
    d, n_g = model.coin_dim, model.state_count
    kraus = [
        [k.evaluate_grid(axis) for k in fam] for fam in model.channels
    ]
    kraus_d1 = [
        [k.derivative(0).evaluate_grid(axis) for k in fam] for fam in model.channels
    ]
    kraus_d2 = [
        [k.derivative(0).derivative(0).evaluate_grid(axis) for k in fam]
        for fam in model.channels
    ]
    rho = psi0.density_on_grid(axis)  # (N, d, d), integrates to unit trace
    if psi0.is_pure:
        # d/dl rho(p+l, p) at l=0: replace psi(p+l) by its l-derivative
        psi_hat = psi0.momentum_amplitude(axis)
        dpsi = np.zeros_like(psi_hat)
        d2psi = np.zeros_like(psi_hat)
        for x, v in psi0.amplitudes.items():
            ph = np.exp(1j * axis * x[0])
            dpsi += (1j * x[0]) * ph[:, None] * v
            d2psi += -(x[0] ** 2) * ph[:, None] * v
        rho_d1 = dpsi[:, :, None] * psi_hat.conj()[:, None, :] / (2.0 * np.pi)
        rho_d2 = d2psi[:, :, None] * psi_hat.conj()[:, None, :] / (2.0 * np.pi)
    else:
        rho_d1 = np.zeros_like(rho)
        rho_d2 = np.zeros_like(rho)
    mtx = model.control.transition
    mbar = model.control.stationary

    eye = np.broadcast_to(np.eye(d, dtype=np.complex128), (n, d, d))
    g_field = np.zeros((n_g, n, d, d), dtype=np.complex128)
    h_field = np.zeros_like(g_field)

    def _apply(op_left, op_right, fields):
        # sum_h m_g(h) sum_i K* fields[h] K_variant, per control state g
        out = np.zeros_like(g_field)
        for g in range(n_g):
            for h in range(n_g):
                if mtx[g, h] == 0.0:
                    continue
                acc = np.zeros((n, d, d), dtype=np.complex128)
                for ki, k0 in enumerate(op_left[g]):
                    acc += np.einsum(
                        "nji,njk,nkl->nil",
                        k0.conj(),
                        fields[h],
                        op_right[g][ki],
                    )
                out[g] += mtx[g, h] * acc
        return out

    def _source(op_right):
        out = np.zeros_like(g_field)
        for g in range(n_g):
            acc = np.zeros((n, d, d), dtype=np.complex128)
            for ki, k0 in enumerate(kraus[g]):
                acc += np.einsum(
                    "nji,njk,nkl->nil", k0.conj(), eye, op_right[g][ki]
                )
            out[g] = acc
        return out

    src_g = _source(kraus_d1)
    src_h = 0.5 * _source(kraus_d2)

    dp = 2.0 * np.pi / n
    results_mean: list[float] = []
    results_second: list[float] = []

    base_d1 = complex(np.einsum("nii->", rho_d1)) * dp
    base_d2 = complex(np.einsum("nii->", rho_d2)) * dp

    def _record() -> tuple[float, float]:
        tr_g = np.einsum("g,nij,gnji->", mbar, rho, g_field) * dp
        tr_h = np.einsum("g,nij,gnji->", mbar, rho, h_field) * dp
        cross = np.einsum("g,nij,gnji->", mbar, rho_d1, g_field) * dp
        m1 = (-1j * (tr_g + base_d1)).real
        m2 = (-2.0 * (tr_h + cross + 0.5 * base_d2)).real
        return float(m1), float(m2)

    ti = 0
    for step in range(t_max + 1):
        if ti < len(times_sorted) and times_sorted[ti] == step:
            m1, m2 = _record()
            results_mean.append(m1)
            results_second.append(m2)
            ti += 1
        if step == t_max:
            break
        h_field = (
            _apply(kraus, kraus, h_field)
            + _apply(kraus, kraus_d1, g_field)
            + src_h
        )
        g_field = _apply(kraus, kraus, g_field) + src_g

    mean = np.array(results_mean)
    second = np.array(results_second)
    return {
        "times": np.array(times_sorted, dtype=np.int64),
        "mean": mean,
        "second_moment": second,
        "variance": second - mean**2,
    }
