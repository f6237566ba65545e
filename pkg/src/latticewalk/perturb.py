"""Asymptotics of Markov-controlled walks by perturbing the eigenvalue 1.

The momentum-space transition operator of a controlled walk acts on block
vectors A = (A(g))_g, one d x d matrix per control state, as

    (T_eps A)(g) = sum_h m_g(h) sum_a K_{ga}(p)* A(h) K_{ga}(p + eps lam).

At eps = 0 the block identity is a fixed point; when that eigenvalue is
simple and isolated, its analytic branch mu_eps = 1 + eps mu' + eps^2 mu''/2
determines the limit laws of the position:

* mu' = i lam.v(p) gives the ballistic drift v(p),
* lam.s(p).lam = -mu'' - (lam.v)^2 gives the diffusion matrix of the
  Gaussian mixture governing (Q - vt)/sqrt(t).

This module builds the transition operator exactly from trigonometric-
polynomial derivatives (no finite differences), solves the first-order
eigenvector correction, assembles s(p) by polarization with an independent
cross-check for random-unitary models, and houses the closed-form analyzers
for scalar Kraus families, commuting normal families, and momentum-kicked
walks, plus the next-order (1/t) characteristic-function correction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .models import (
    InitialState,
    MarkovWalkModel,
    MomentumShiftModel,
    scalar_kraus_model,
)
from .trigpoly import index

__all__ = [
    "TransitionOperator",
    "InvariantState",
    "AssumptionReport",
    "FirstOrderResult",
    "PerturbationReport",
    "ComplexVarianceWarning",
    "CommutingVelocityField",
    "MomentumShiftAsymptotics",
    "build_transition",
    "check_assumptions",
    "invariant_state",
    "ballistic_velocity",
    "mean_index_velocity",
    "first_order",
    "perturbation_report",
    "diffusion_matrix",
    "bernoulli_diffusion",
    "gaussian_limit_density",
    "next_order_cf",
    "next_order_density",
    "scalar_velocity",
    "commuting_kraus_velocity",
    "momentum_shift_asymptotics",
]

#: eigenvalue 1 counts as isolated when the rest of the spectrum is at
#: least this far inside the unit disc
GAP_TOL = 1e-8


class ComplexVarianceWarning(UserWarning):
    """The diffusion "variance" came out complex (non-unitary Kraus family).

    Such an s(p) is meaningful only after integration over momentum: the
    imaginary part cancels in the momentum average but forbids reading
    s(p) pointwise as a Gaussian variance.
    """


# ----------------------------------------------------------------------
# small helpers
# ----------------------------------------------------------------------

def _momentum(model: MarkovWalkModel, p: ArrayLike) -> NDArray[np.float64]:
    q = np.atleast_1d(np.asarray(p, dtype=np.float64))
    if q.shape != (model.lattice_dim,):
        raise ValueError(
            f"momentum has shape {q.shape}, expected ({model.lattice_dim},)"
        )
    return q


def _direction(model: MarkovWalkModel, lam: ArrayLike) -> NDArray[np.float64]:
    v = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    if v.shape != (model.lattice_dim,):
        raise ValueError(
            f"direction has shape {v.shape}, expected ({model.lattice_dim},)"
        )
    return v


def _kraus_values(
    model: MarkovWalkModel, p: NDArray[np.float64]
) -> list[list[NDArray[np.complex128]]]:
    return [[k.evaluate(p) for k in fam] for fam in model.channels]


def _kraus_directional(
    model: MarkovWalkModel,
    p: NDArray[np.float64],
    lam: NDArray[np.float64],
    order: int,
) -> list[list[NDArray[np.complex128]]]:
    """(lam.grad)^order K_{ga} evaluated at p, for every Kraus factor."""
    out = []
    for fam in model.channels:
        row = []
        for k in fam:
            d = k
            for _ in range(order):
                d = d.directional_derivative(lam)
            row.append(d.evaluate(p))
        out.append(row)
    return out


def _expectation(
    mbar: NDArray[np.float64],
    rho: NDArray[np.complex128],
    blocks: NDArray[np.complex128],
) -> complex:
    """The invariant functional sum_g mbar_g tr(rho A(g))."""
    return complex(np.einsum("g,ij,gji->", mbar, rho, blocks))


def _unit_direction(s: int, axis: int = 0) -> NDArray[np.float64]:
    e = np.zeros(s)
    e[axis] = 1.0
    return e


# ----------------------------------------------------------------------
# transition operator
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class TransitionOperator:
    """Dense matrix form of the momentum-space transition operator.

    Blocks are flattened row-major, so the full operator acts on vectors
    of length ``n_states * coin_dim**2``; :meth:`apply` reshapes for you.

    Attributes
    ----------
    momentum, direction : tuple of float
        The momentum p and perturbation direction lam it was built at.
    epsilon : float
        Perturbation strength; the right Kraus factor is taken at
        p + epsilon * direction.
    matrix : (N, N) complex ndarray
    n_states, coin_dim : int
    """

    momentum: tuple[float, ...]
    direction: tuple[float, ...]
    epsilon: float
    matrix: NDArray[np.complex128]
    n_states: int
    coin_dim: int

    def apply(self, blocks: ArrayLike) -> NDArray[np.complex128]:
        """Apply to a block vector of shape (n_states, d, d)."""
        n, d = self.n_states, self.coin_dim
        a = np.asarray(blocks, dtype=np.complex128).reshape(n * d * d)
        return (self.matrix @ a).reshape(n, d, d)

    def eigenvalue_nearest_one(self) -> complex:
        """The eigenvalue closest to 1 (the perturbed fixed-point branch)."""
        vals = np.linalg.eigvals(self.matrix)
        return complex(vals[np.argmin(np.abs(vals - 1.0))])


def build_transition(
    model: MarkovWalkModel,
    p: ArrayLike,
    direction: ArrayLike,
    epsilon: float,
) -> TransitionOperator:
    """Assemble the transition operator at momentum p, direction lam, strength eps.

    Block (g, h) of the matrix is

        m_g(h) sum_a kron(K_{ga}(p)*, K_{ga}(p + eps lam)^T),

    which on row-major-flattened blocks realizes A(h) -> K* A(h) K'.  At
    eps = 0 the block identity must be an exact fixed point (checked
    within 1e-12; failure means the model normalization is inconsistent).
    """
    pv = _momentum(model, p)
    lam = _direction(model, direction)
    n, d = model.state_count, model.coin_dim
    m = model.control.transition
    left = _kraus_values(model, pv)
    right = left if epsilon == 0.0 else _kraus_values(model, pv + epsilon * lam)
    mat = np.zeros((n * d * d, n * d * d), dtype=np.complex128)
    for g in range(n):
        block = sum(
            np.kron(kl.conj().T, kr.T) for kl, kr in zip(left[g], right[g])
        )
        for h in range(n):
            if m[g, h] != 0.0:
                mat[g * d * d : (g + 1) * d * d, h * d * d : (h + 1) * d * d] = (
                    m[g, h] * block
                )
    op = TransitionOperator(tuple(pv), tuple(lam), float(epsilon), mat, n, d)
    if epsilon == 0.0:
        ident = np.broadcast_to(np.eye(d), (n, d, d))
        defect = np.abs(op.apply(ident) - ident).max()
        if defect > 1e-12:
            raise ValueError(
                f"block identity is not fixed at eps=0 (defect {defect:.2e}); "
                "the model's Kraus normalization is inconsistent"
            )
    return op


def _gap_and_multiplicity(matrix: NDArray[np.complex128]) -> tuple[float, int]:
    """Spectral gap 1 - |mu_2| and the multiplicity of eigenvalue 1."""
    vals = np.linalg.eigvals(matrix)
    mult = int(np.count_nonzero(np.abs(vals - 1.0) < 1e-9))
    rest = np.abs(vals[np.abs(vals - 1.0) >= 1e-9])
    gap = 1.0 - rest.max() if rest.size else 1.0
    if mult != 1:
        gap = 0.0
    return float(gap), mult


# ----------------------------------------------------------------------
# invariant state and assumption diagnostics
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class InvariantState:
    """Common invariant state of all per-state channels.

    ``mbar`` is the stationary law of the control chain and ``rho`` a
    Hermitian PSD trace-1 matrix with sum_a K_{ga} rho K_{ga}* = rho for
    every control state g, momentum-independently.  ``faithful`` requires
    the smallest eigenvalue of rho to exceed 1e-10; the perturbation
    formulas are valid only then, and the solvers refuse otherwise.
    """

    mbar: NDArray[np.float64]
    rho: NDArray[np.complex128] | None
    faithful: bool
    residual: float

    def require_faithful(self) -> None:
        if self.rho is None:
            raise ValueError(
                "no common invariant state exists "
                f"(fixed-space intersection residual {self.residual:.2e})"
            )
        if not self.faithful:
            raise ValueError(
                "the common invariant state is not faithful "
                "(eigenvalue below 1e-10); perturbation formulas do not apply"
            )


def invariant_state(model: MarkovWalkModel) -> InvariantState:
    """Find the common invariant density matrix of all per-state channels.

    For random-unitary models (and scalar ones) the maximally mixed state
    1/d is invariant and returned directly.  Otherwise the fixed-point
    equations of every channel, sampled at several momenta, are stacked
    into one homogeneous system whose hermitized nullspace is searched
    for a PSD trace-1 element.
    """
    mbar = model.control.stationary
    d = model.coin_dim
    if model.unitary or d == 1:
        rho = np.eye(d, dtype=np.complex128) / d
        return InvariantState(mbar, rho, True, 0.0)
    samples = np.linspace(-2.9, 2.9, 5)
    rows = []
    eye = np.eye(d * d)
    for g in range(model.state_count):
        for p0 in samples:
            pv = np.full(model.lattice_dim, p0)
            fam = [k.evaluate(pv) for k in model.channels[g]]
            rows.append(sum(np.kron(k, k.conj()) for k in fam) - eye)
    stack = np.vstack(rows)
    _, sing, vh = np.linalg.svd(stack)
    null = vh[sing < 1e-10]
    if null.shape[0] == 0:
        residual = float(sing[-1]) if sing.size else math.inf
        return InvariantState(mbar, None, False, residual)
    best = None
    best_min = -math.inf
    for row in null:
        cand = row.reshape(d, d)
        cand = 0.5 * (cand + cand.conj().T)
        tr = float(np.trace(cand).real)
        if abs(tr) < 1e-12:
            continue
        cand = cand / tr
        low = float(np.linalg.eigvalsh(cand).min())
        if low > best_min:
            best, best_min = cand, low
    if best is None or best_min < -1e-10:
        return InvariantState(mbar, None, False, 0.0)
    residual = float(np.abs(stack @ best.reshape(-1)).max())
    return InvariantState(mbar, best, bool(best_min > 1e-10), residual)


@dataclass(frozen=True)
class PointDiagnostics:
    """Spectral health of the eps=0 transition operator at one momentum."""

    momentum: tuple[float, ...]
    gap: float
    unit_multiplicity: int


@dataclass(frozen=True)
class AssumptionReport:
    """Diagnostics for the simple-isolated-eigenvalue assumption.

    The perturbation pipeline needs, per momentum, eigenvalue 1 of the
    eps=0 transition operator simple and isolated (positive gap), and
    globally: an ergodic control chain (some power of the transition
    matrix, up to the squared state count, strictly positive), an
    irreducible Kraus family (products up to length 4 span all d x d
    matrices), and a faithful common invariant state.  ``passed``
    aggregates everything; the report never raises, so callers can
    inspect failures.  ``commuting_kraus`` flags pairwise-commuting
    families — the typical way irreducibility fails.
    """

    points: tuple[PointDiagnostics, ...]
    chain_positive_power: int | None
    algebra_rank: int
    coin_dim: int
    commuting_kraus: bool
    invariant: InvariantState

    @property
    def min_gap(self) -> float:
        return min((pt.gap for pt in self.points), default=math.nan)

    @property
    def algebra_spans(self) -> bool:
        return self.algebra_rank == self.coin_dim**2

    @property
    def passed(self) -> bool:
        return (
            all(pt.unit_multiplicity == 1 for pt in self.points)
            and all(pt.gap > GAP_TOL for pt in self.points)
            and self.chain_positive_power is not None
            and self.algebra_spans
            and self.invariant.faithful
        )

    def __bool__(self) -> bool:
        return self.passed


def _algebra_rank(
    fams: list[list[NDArray[np.complex128]]], max_len: int = 4
) -> int:
    """Rank of the span of Kraus products up to the given length."""
    d = fams[0][0].shape[0]
    ops = [k for fam in fams for k in fam]
    eye = np.eye(d, dtype=np.complex128)
    span = [eye]
    frontier = [eye]
    for _ in range(max_len):
        frontier = [k @ f for f in frontier for k in ops]
        span.extend(frontier)
    basis = np.array([m.reshape(-1) for m in span])
    return int(np.linalg.matrix_rank(basis, tol=1e-10))


def _pairwise_commuting(
    fams: list[list[NDArray[np.complex128]]], tol: float = 1e-10
) -> bool:
    ops = [k for fam in fams for k in fam]
    for i, a in enumerate(ops):
        for b in ops[i + 1 :]:
            if np.abs(a @ b - b @ a).max() > tol:
                return False
    return True


def check_assumptions(
    model: MarkovWalkModel, p_samples: ArrayLike
) -> AssumptionReport:
    """Diagnose whether the perturbation machinery applies to this model.

    ``p_samples`` is an iterable of momenta (scalars in 1D, vectors
    otherwise).  Returns an :class:`AssumptionReport`; failed checks are
    reported, never raised.
    """
    samples = np.asarray(p_samples, dtype=np.float64)
    samples = samples.reshape(-1, model.lattice_dim)
    lam = _unit_direction(model.lattice_dim)
    pts = []
    commuting = True
    ranks = []
    for i, pv in enumerate(samples):
        op = build_transition(model, pv, lam, 0.0)
        gap, mult = _gap_and_multiplicity(op.matrix)
        pts.append(PointDiagnostics(tuple(pv), gap, mult))
        fams = _kraus_values(model, pv)
        commuting = commuting and _pairwise_commuting(fams)
        if i % max(1, len(samples) // 3) == 0:
            ranks.append(_algebra_rank(fams))
    n = model.state_count
    m = model.control.transition
    power = None
    acc = np.eye(n)
    for k in range(1, n * n + 1):
        acc = acc @ m
        if np.all(acc > 0.0):
            power = k
            break
    inv = invariant_state(model)
    rank = max(ranks) if ranks else 0
    return AssumptionReport(
        tuple(pts), power, rank, model.coin_dim, bool(commuting), inv
    )


# ----------------------------------------------------------------------
# ballistic order
# ----------------------------------------------------------------------

def _velocity(
    model: MarkovWalkModel,
    pv: NDArray[np.float64],
    inv: InvariantState,
) -> NDArray[np.float64]:
    mbar, rho = inv.mbar, inv.rho
    vals = _kraus_values(model, pv)
    v = np.empty(model.lattice_dim, dtype=np.float64)
    for a in range(model.lattice_dim):
        acc = 0.0 + 0.0j
        for g, fam in enumerate(model.channels):
            for k, kmat in zip(fam, vals[g]):
                dk = k.derivative(a).evaluate(pv)
                acc += mbar[g] * np.trace(rho @ kmat.conj().T @ dk)
        val = -1j * acc
        if abs(val.imag) > 1e-9:
            raise ValueError(
                f"velocity component {a} has imaginary part {val.imag:.2e}; "
                "the model transfers momentum or is misnormalized"
            )
        v[a] = val.real
    return v


def ballistic_velocity(model: MarkovWalkModel, p: ArrayLike) -> NDArray[np.float64]:
    """Drift v(p) = -i sum_g mbar_g sum_a tr(rho K_{ga}(p)* grad K_{ga}(p)).

    The trace is against the faithful common invariant state; the result
    is real whenever the family transfers no momentum, so an imaginary
    residual above 1e-9 raises (it flags a broken normalization).
    """
    pv = _momentum(model, p)
    inv = invariant_state(model)
    inv.require_faithful()
    return _velocity(model, pv, inv)


def mean_index_velocity(model: MarkovWalkModel) -> NDArray[np.float64]:
    """v = sum_g mbar_g ind(K_g) / d for random-unitary models.

    The winding index of each unitary makes the drift momentum-
    independent.  The result is cross-checked against
    :func:`ballistic_velocity` at 8 random momenta within 1e-9; a
    mismatch (index aliasing) raises.
    """
    if not model.unitary:
        raise ValueError("mean index velocity requires a random-unitary model")
    mbar = model.control.stationary
    d = model.coin_dim
    acc = np.zeros(model.lattice_dim, dtype=np.float64)
    for g, fam in enumerate(model.channels):
        acc += mbar[g] * np.asarray(index(fam[0]), dtype=np.float64)
    v = acc / d
    rng = np.random.default_rng(1234)
    for _ in range(8):
        pv = rng.uniform(-np.pi, np.pi, size=model.lattice_dim)
        dev = np.abs(ballistic_velocity(model, pv) - v).max()
        if dev > 1e-9:
            raise ValueError(
                f"index-based drift {v} deviates from the pointwise velocity "
                f"by {dev:.2e} at p={pv}; winding computation is inconsistent"
            )
    return v


# ----------------------------------------------------------------------
# first- and second-order perturbation pipeline
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class FirstOrderResult:
    """Solution A' of (T_0 - id) A' = i lam.v - V'(1), normalized to zero mean.

    ``blocks`` has shape (n_states, d, d); each block is skew-Hermitian
    and the invariant-state expectation vanishes.  ``residual`` is the L2
    defect of the augmented least-squares solve, ``gap`` the spectral gap
    of the eps=0 operator at this momentum.
    """

    momentum: tuple[float, ...]
    direction: tuple[float, ...]
    blocks: NDArray[np.complex128]
    residual: float
    gap: float


@dataclass(frozen=True)
class PerturbationReport:
    """Everything the eigenvalue-1 perturbation yields at one momentum.

    ``first_order[j]`` is the correction for the basis direction e_j;
    ``second_order`` maps each polarization direction (as a tuple) to
    mu''; ``diffusion`` is s(p), real symmetric for random-unitary models
    and possibly complex otherwise (see :class:`ComplexVarianceWarning`).
    ``gap`` is the eps=0 spectral gap 1 - |mu_2| and ``residuals`` the
    linear-solve defects, one per polarization direction.
    """

    momentum: tuple[float, ...]
    invariant: InvariantState
    velocity: NDArray[np.float64]
    first_order: tuple[FirstOrderResult, ...]
    second_order: dict[tuple[float, ...], complex]
    diffusion: NDArray
    gap: float
    residuals: tuple[float, ...]
    unitary: bool


def _polarization_directions(s: int) -> list[tuple[int, int, NDArray[np.float64]]]:
    dirs = []
    for j in range(s):
        dirs.append((j, j, _unit_direction(s, j)))
    for j in range(s):
        for k in range(j + 1, s):
            e = np.zeros(s)
            e[j] = e[k] = 1.0
            dirs.append((j, k, e))
    return dirs


def _vprime_blocks(
    model: MarkovWalkModel,
    pv: NDArray[np.float64],
    lam: NDArray[np.float64],
    order: int,
    vals: list[list[NDArray[np.complex128]]],
) -> NDArray[np.complex128]:
    """Blocks sum_a K_{ga}(p)* (lam.grad)^order K_{ga}(p), one per state."""
    ders = _kraus_directional(model, pv, lam, order)
    n, d = model.state_count, model.coin_dim
    out = np.zeros((n, d, d), dtype=np.complex128)
    for g in range(n):
        for kmat, dmat in zip(vals[g], ders[g]):
            out[g] += kmat.conj().T @ dmat
    return out


def _solve_first_order(
    op0: TransitionOperator,
    inv: InvariantState,
    rhs_blocks: NDArray[np.complex128],
) -> tuple[NDArray[np.complex128], float]:
    """Augmented least-squares solve, then exact kernel projection.

    The kernel of T_0 - id is spanned by the block identity, so after the
    solve the normalization (the m x rho expectation) is zeroed exactly
    by subtracting the corresponding multiple of the identity.
    """
    n, d = op0.n_states, op0.coin_dim
    mbar, rho = inv.mbar, inv.rho
    norm_row = np.einsum("g,ij->gji", mbar, rho).reshape(1, -1)
    a_mat = np.vstack([op0.matrix - np.eye(n * d * d), norm_row])
    b = np.concatenate([rhs_blocks.reshape(-1), [0.0]])
    sol, *_ = np.linalg.lstsq(a_mat, b, rcond=None)
    blocks = sol.reshape(n, d, d)
    # The exact solution is skew-Hermitian (skew rhs, structure-preserving
    # operator, Hermitian kernel direction): discard the conditioning noise
    # in the Hermitian component, then re-zero the (now purely imaginary)
    # invariant-state expectation along the skew direction i*identity.
    blocks = 0.5 * (blocks - blocks.conj().transpose(0, 2, 1))
    shift = _expectation(mbar, rho, blocks)
    blocks = blocks - shift * np.eye(d)
    residual = float(np.linalg.norm(a_mat @ blocks.reshape(-1) - b))
    return blocks, residual


def _mu_second(
    model: MarkovWalkModel,
    pv: NDArray[np.float64],
    lam: NDArray[np.float64],
    inv: InvariantState,
    a_prime: NDArray[np.complex128],
    vals: list[list[NDArray[np.complex128]]],
) -> complex:
    """mu'' = E[V''(1)] + 2 E[V'(A')] under the invariant state."""
    mbar, rho = inv.mbar, inv.rho
    m = model.control.transition
    ders = _kraus_directional(model, pv, lam, 1)
    second = _vprime_blocks(model, pv, lam, 2, vals)
    term1 = _expectation(mbar, rho, second)
    term2 = 0.0 + 0.0j
    for g in range(model.state_count):
        avg_a = np.einsum("h,hij->ij", m[g], a_prime)
        for kmat, dmat in zip(vals[g], ders[g]):
            term2 += mbar[g] * np.trace(rho @ kmat.conj().T @ avg_a @ dmat)
    return complex(term1 + 2.0 * term2)


def first_order(
    model: MarkovWalkModel, p: ArrayLike, direction: ArrayLike
) -> FirstOrderResult:
    """Solve for the first-order eigenvector correction A' at momentum p.

    The operator T_0 - id is singular with a one-dimensional kernel (the
    block identity), so the system is augmented with the normalization
    row enforcing a vanishing invariant-state expectation and solved by
    least squares; the kernel component is then projected out exactly.
    A residual above 1e-9 or a non-skew-Hermitian block raises — both
    indicate the simple-isolated-eigenvalue assumption fails at p.
    """
    pv = _momentum(model, p)
    lam = _direction(model, direction)
    inv = invariant_state(model)
    inv.require_faithful()
    op0 = build_transition(model, pv, lam, 0.0)
    gap, _ = _gap_and_multiplicity(op0.matrix)
    v = _velocity(model, pv, inv)
    vals = _kraus_values(model, pv)
    n, d = model.state_count, model.coin_dim
    ident = np.broadcast_to(np.eye(d), (n, d, d))
    rhs = 1j * float(lam @ v) * ident - _vprime_blocks(model, pv, lam, 1, vals)
    blocks, residual = _solve_first_order(op0, inv, rhs)
    if residual > 1e-9:
        raise ValueError(
            f"first-order solve residual {residual:.2e} at p={tuple(pv)} "
            f"(gap {gap:.2e}); eigenvalue 1 is not simple and isolated there"
        )
    skew = np.abs(blocks + blocks.conj().transpose(0, 2, 1)).max()
    if skew > 1e-9:
        raise ValueError(
            f"first-order correction is not skew-Hermitian (defect {skew:.2e})"
        )
    return FirstOrderResult(tuple(pv), tuple(lam), blocks, residual, gap)


def perturbation_report(model: MarkovWalkModel, p: ArrayLike) -> PerturbationReport:
    """Run the full perturbation pipeline at one momentum.

    Computes the invariant state, drift, first-order corrections for all
    basis directions, mu'' for every polarization direction, and the
    diffusion matrix s(p) via lam.s.lam = -mu'' - (lam.v)^2.  For
    random-unitary models s(p) is recomputed through the independent
    fluctuation form

        lam.s.lam = E[|A'|^2 - |T_0 A'|^2],

    must agree within 1e-8, and must be PSD within -1e-10; it is then
    returned as float64.  Non-unitary families may produce a genuinely
    complex matrix, returned as complex128 under a
    :class:`ComplexVarianceWarning`.
    """
    pv = _momentum(model, p)
    inv = invariant_state(model)
    inv.require_faithful()
    s = model.lattice_dim
    n, d = model.state_count, model.coin_dim
    op0 = build_transition(model, pv, _unit_direction(s), 0.0)
    gap, _ = _gap_and_multiplicity(op0.matrix)
    v = _velocity(model, pv, inv)
    vals = _kraus_values(model, pv)
    ident = np.broadcast_to(np.eye(d), (n, d, d))
    quad = np.zeros((s, s), dtype=np.complex128)
    basis_results: list[FirstOrderResult] = []
    second: dict[tuple[float, ...], complex] = {}
    residuals: list[float] = []
    for j, k, lam in _polarization_directions(s):
        rhs = 1j * float(lam @ v) * ident - _vprime_blocks(
            model, pv, lam, 1, vals
        )
        blocks, residual = _solve_first_order(op0, inv, rhs)
        residuals.append(residual)
        if residual > 1e-9:
            raise ValueError(
                f"first-order solve residual {residual:.2e} at p={tuple(pv)}, "
                f"lam={tuple(lam)} (gap {gap:.2e}); eigenvalue 1 is not "
                "simple and isolated there"
            )
        skew = np.abs(blocks + blocks.conj().transpose(0, 2, 1)).max()
        if skew > 1e-9:
            raise ValueError(
                f"first-order correction is not skew-Hermitian "
                f"(defect {skew:.2e}) at p={tuple(pv)}"
            )
        if j == k:
            basis_results.append(
                FirstOrderResult(tuple(pv), tuple(lam), blocks, residual, gap)
            )
        mu2 = _mu_second(model, pv, lam, inv, blocks, vals)
        second[tuple(lam)] = mu2
        form = -mu2 - float(lam @ v) ** 2
        if j == k:
            quad[j, j] = form
        else:
            quad[j, k] = quad[k, j] = 0.5 * (form - quad[j, j] - quad[k, k])
        if model.unitary:
            ta = op0.apply(blocks)
            alt = _expectation(
                inv.mbar,
                inv.rho,
                np.einsum("gki,gkj->gij", blocks.conj(), blocks)
                - np.einsum("gki,gkj->gij", ta.conj(), ta),
            )
            if abs(alt - form) > 1e-8:
                raise ValueError(
                    f"diffusion routes disagree at p={tuple(pv)}, "
                    f"lam={tuple(lam)}: polarization gives {form!r}, "
                    f"fluctuation form gives {alt!r}"
                )
    if model.unitary:
        mat = 0.5 * (quad.real + quad.real.T)
        eigs = np.linalg.eigvalsh(mat)
        if eigs.min() < -1e-10:
            raise ValueError(
                f"diffusion matrix not PSD for a random-unitary model "
                f"(min eigenvalue {eigs.min():.2e})"
            )
        diffusion: NDArray = mat
    elif np.abs(quad.imag).max() <= 1e-10:
        diffusion = 0.5 * (quad.real + quad.real.T)
    else:
        warnings.warn(
            "diffusion matrix is complex (non-unitary Kraus family); it "
            "represents a variance only after integration over momentum",
            ComplexVarianceWarning,
            stacklevel=2,
        )
        diffusion = quad
    return PerturbationReport(
        tuple(pv),
        inv,
        v,
        tuple(basis_results),
        second,
        diffusion,
        gap,
        tuple(residuals),
        model.unitary,
    )


def diffusion_matrix(model: MarkovWalkModel, p: ArrayLike) -> NDArray:
    """Diffusion matrix s(p) with lam.s.lam = -mu'' - (lam.v)^2.

    Second derivatives enter through exact trig-polynomial
    differentiation; off-diagonal entries come from polarization over the
    directions e_j, e_k, e_j + e_k.  For random-unitary models the result
    is verified against an independent fluctuation form, checked PSD, and
    returned as float64; otherwise it may be complex128 under a
    :class:`ComplexVarianceWarning`.  See :func:`perturbation_report`.
    """
    return perturbation_report(model, p).diffusion


def bernoulli_diffusion(model: MarkovWalkModel, p: ArrayLike) -> NDArray:
    """Diffusion via the memoryless shortcut: one d^2 solve instead of n d^2.

    For a control chain with identical rows only the stationary average X
    of the first-order blocks matters; X solves

        T_avg(X) - X = i lam.v - V_avg'(1)

    with the stationary-averaged dual channel on the left and the
    normalization tr(rho X) = 0.  The result must reproduce
    :func:`diffusion_matrix` within 1e-9 (raises otherwise); non-Bernoulli
    control raises.
    """
    if not model.control.is_bernoulli():
        raise ValueError("bernoulli_diffusion requires identical transition rows")
    pv = _momentum(model, p)
    inv = invariant_state(model)
    inv.require_faithful()
    mbar, rho = inv.mbar, inv.rho
    d = model.coin_dim
    s = model.lattice_dim
    v = _velocity(model, pv, inv)
    vals = _kraus_values(model, pv)
    t_avg = np.zeros((d * d, d * d), dtype=np.complex128)
    for g in range(model.state_count):
        for kmat in vals[g]:
            t_avg += mbar[g] * np.kron(kmat.conj().T, kmat.T)
    quad = np.zeros((s, s), dtype=np.complex128)
    for j, k, lam in _polarization_directions(s):
        vp1 = _vprime_blocks(model, pv, lam, 1, vals)
        rhs = 1j * float(lam @ v) * np.eye(d) - np.einsum(
            "g,gij->ij", mbar, vp1
        )
        a_mat = np.vstack([t_avg - np.eye(d * d), rho.T.reshape(1, -1)])
        b = np.concatenate([rhs.reshape(-1), [0.0]])
        sol, *_ = np.linalg.lstsq(a_mat, b, rcond=None)
        residual = float(np.linalg.norm(a_mat @ sol - b))
        if residual > 1e-9:
            raise ValueError(
                f"averaged first-order solve residual {residual:.2e} at "
                f"p={tuple(pv)}; eigenvalue 1 of the averaged channel is "
                "degenerate"
            )
        x = sol.reshape(d, d)
        x = x - np.trace(rho @ x) * np.eye(d)
        ders = _kraus_directional(model, pv, lam, 1)
        mu2 = _expectation(mbar, rho, _vprime_blocks(model, pv, lam, 2, vals))
        for g in range(model.state_count):
            for kmat, dmat in zip(vals[g], ders[g]):
                mu2 += 2.0 * mbar[g] * np.trace(rho @ kmat.conj().T @ x @ dmat)
        form = -mu2 - float(lam @ v) ** 2
        if j == k:
            quad[j, j] = form
        else:
            quad[j, k] = quad[k, j] = 0.5 * (form - quad[j, j] - quad[k, k])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ComplexVarianceWarning)
        full = diffusion_matrix(model, pv)
    dev = np.abs(quad - np.asarray(full, dtype=np.complex128)).max()
    if dev > 1e-9:
        raise ValueError(
            f"Bernoulli shortcut deviates from the full solve by {dev:.2e}"
        )
    if np.abs(quad.imag).max() <= 1e-10:
        return 0.5 * (quad.real + quad.real.T)
    warnings.warn(
        "diffusion matrix is complex (non-unitary Kraus family); it "
        "represents a variance only after integration over momentum",
        ComplexVarianceWarning,
        stacklevel=2,
    )
    return quad


# ----------------------------------------------------------------------
# limit densities
# ----------------------------------------------------------------------

def _midpoint_axis(n: int) -> NDArray[np.float64]:
    """Midpoint momentum grid on (-pi, pi); never hits poles of A'(p)."""
    return -np.pi + 2.0 * np.pi * (np.arange(n) + 0.5) / n


def gaussian_limit_density(
    model: MarkovWalkModel,
    rho: InitialState,
    x_grid: ArrayLike,
    grid_points: int = 128,
) -> NDArray[np.float64]:
    """Density of (Q - vt)/sqrt(t): a momentum mixture of centered Gaussians.

    P(x) = integral dp tr rho(p) N(0, s(p))(x), with s(p) from the
    perturbation pipeline on a ``grid_points`` momentum grid.  Requires a
    drift constant over the grid (sup deviation 1e-8) — otherwise the
    centered deviation variable is ill-defined — and a 1D lattice.  The
    result must integrate to 1 within 1e-6 on ``x_grid`` (widen the grid
    if this raises).
    """
    if model.lattice_dim != 1:
        raise ValueError("gaussian_limit_density supports 1D lattices")
    if rho.lattice_dim != 1 or rho.coin_dim != model.coin_dim:
        raise ValueError("initial state does not match the model dimensions")
    x = np.asarray(x_grid, dtype=np.float64).ravel()
    paxis = _midpoint_axis(grid_points)
    weights = np.einsum("pii->p", rho.density_on_grid(paxis)).real
    weights = weights * (2.0 * np.pi / grid_points)
    dens = np.zeros_like(x)
    v0: NDArray[np.float64] | None = None
    for w, p0 in zip(weights, paxis):
        rep = perturbation_report(model, p0)
        if v0 is None:
            v0 = rep.velocity
        elif np.abs(rep.velocity - v0).max() > 1e-8:
            raise ValueError(
                f"drift varies over momentum (v({p0:.3f}) = {rep.velocity}, "
                f"elsewhere {v0}); the deviation law needs a constant velocity"
            )
        svar = float(np.real(np.asarray(rep.diffusion)[0, 0]))
        if svar <= 0.0:
            raise ValueError(f"nonpositive variance s({p0:.3f}) = {svar:.2e}")
        dens += w * np.exp(-0.5 * x * x / svar) / math.sqrt(
            2.0 * math.pi * svar
        )
    total = float(np.trapezoid(dens, x))
    if abs(total - 1.0) > 1e-6:
        raise ValueError(
            f"density integrates to {total!r} on the given grid; widen x_grid"
        )
    return dens


def _next_order_tables(
    model: MarkovWalkModel,
    rho: InitialState,
    grid_points: int,
) -> tuple[
    NDArray[np.float64],
    NDArray[np.float64],
    NDArray[np.complex128],
    NDArray[np.complex128],
]:
    """Per-momentum tables (p, v, s, linear A'-correction) for the 1/t CF.

    The correction table holds tr(rho(p, p) Abar'(p)) for the unit
    direction; A' is linear in lam, so the lam dependence is the scalar
    factor lam.  The midpoint grid keeps the quadrature clear of the
    isolated principal-value poles A' may have.
    """
    if model.lattice_dim != 1:
        raise ValueError("the next-order correction supports 1D lattices")
    if not rho.is_pure:
        raise ValueError(
            "the next-order term needs the momentum kernel of a pure state"
        )
    paxis = _midpoint_axis(grid_points)
    vtab = np.empty(grid_points)
    stab = np.empty(grid_points, dtype=np.complex128)
    ctab = np.empty(grid_points, dtype=np.complex128)
    amps = rho.momentum_amplitude(paxis)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ComplexVarianceWarning)
        for i, p0 in enumerate(paxis):
            rep = perturbation_report(model, p0)
            vtab[i] = rep.velocity[0]
            stab[i] = complex(np.asarray(rep.diffusion)[0, 0])
            abar = np.einsum(
                "g,gij->ij", rep.invariant.mbar, rep.first_order[0].blocks
            )
            ctab[i] = np.einsum(
                "i,ij,j->", amps[i].conj(), abar, amps[i]
            ) / (2.0 * np.pi)
    return paxis, vtab, stab, ctab


def _cf_from_tables(
    rho: InitialState, tables: tuple, lam: float, t: int
) -> complex:
    paxis, vtab, stab, ctab = tables
    dp = 2.0 * np.pi / paxis.size
    c0 = rho.kernel_trace(paxis + lam / t, paxis)
    integrand = np.exp(1j * lam * vtab - lam * lam * stab / (2.0 * t)) * (
        c0 + lam * ctab / t
    )
    return complex(np.sum(integrand) * dp)


def next_order_cf(
    model: MarkovWalkModel,
    rho: InitialState,
    lam: float,
    t: int,
    grid_points: int = 512,
) -> complex:
    """Characteristic function of Q(t)/t including the 1/t correction.

    C_t(lam) = integral dp exp(i lam v(p) - lam.s(p).lam / (2t))
               * (C_0(lam/t, p) + tr[rho(p, p) Abar'(p; lam)] / t),

    where C_0(l, p) = tr rho(p + l, p) is the initial momentum kernel and
    Abar' the stationary average of the first-order correction (linear in
    lam).  The quadrature grid is midpoint-shifted, which keeps the
    integrable principal-value poles of A' between nodes.  At lam = 0
    this reduces to the total mass 1.
    """
    tables = _next_order_tables(model, rho, int(grid_points))
    return _cf_from_tables(rho, tables, float(lam), int(t))


def next_order_density(
    model: MarkovWalkModel,
    rho: InitialState,
    x_grid: ArrayLike,
    t: int,
    cutoff: float = 10.0,
    lam_points: int = 257,
    grid_points: int = 512,
) -> NDArray[np.float64]:
    """Inverse transform of :func:`next_order_cf` with a Gaussian cutoff.

    The 1/t-corrected characteristic function is not integrable, so it is
    damped by exp(-(lam/cutoff)^2) before the numerical inverse Fourier
    transform; the price is a smoothing of the recovered density on the
    scale 1/cutoff.  Ballistic scaling: densities are over u = x/t.
    """
    x = np.asarray(x_grid, dtype=np.float64).ravel()
    tables = _next_order_tables(model, rho, int(grid_points))
    lam_max = 3.5 * cutoff
    lams = np.linspace(-lam_max, lam_max, int(lam_points))
    cf = np.array([_cf_from_tables(rho, tables, l, int(t)) for l in lams])
    cf = cf * np.exp(-((lams / cutoff) ** 2))
    dl = lams[1] - lams[0]
    return (np.exp(-1j * np.outer(x, lams)) @ cf).real * dl / (2.0 * np.pi)


# ----------------------------------------------------------------------
# closed-form analyzers for special families
# ----------------------------------------------------------------------

def scalar_velocity(model: MarkovWalkModel):
    """Exact drift of a scalar (coin-dimension 1) Kraus family.

    Returns a vectorized callable v(p) = sum_x |c_x| cos(p x + arg c_x)
    with c_x = sum_{i,k} conj(a_{i,k-x}) a_{ik} k built from the Kraus
    coefficients; the coefficient table is attached as ``.coefficients``.
    Cross-checked against :func:`ballistic_velocity` at 16 momenta within
    1e-10 — a mismatch traps momentum-convention bugs.
    """
    if model.coin_dim != 1 or model.state_count != 1:
        raise ValueError("scalar_velocity requires a d=1 single-state family")
    fams = [{x[0]: complex(c[0, 0]) for x, c in k} for k in model.channels[0]]
    offsets = sorted({x for fam in fams for x in fam})
    span = offsets[-1] - offsets[0] if offsets else 0
    coeff: dict[int, complex] = {}
    for x in range(-span, span + 1):
        acc = 0.0 + 0.0j
        for fam in fams:
            for k, a in fam.items():
                acc += np.conj(fam.get(k - x, 0.0)) * a * k
        if abs(acc) > 1e-15:
            coeff[x] = acc

    def v(p: ArrayLike):
        q = np.asarray(p, dtype=np.float64)
        out = np.zeros_like(q, dtype=np.float64)
        for x, c in coeff.items():
            out = out + abs(c) * np.cos(q * x + np.angle(c))
        return out if q.ndim else float(out)

    v.coefficients = dict(coeff)
    for p0 in np.linspace(-2.8, 2.8, 16):
        dev = abs(float(v(p0)) - float(ballistic_velocity(model, p0)[0]))
        if dev > 1e-10:
            raise ValueError(
                f"coefficient formula deviates from the trace formula by "
                f"{dev:.2e} at p={p0:.3f}"
            )
    return v


@dataclass(frozen=True)
class CommutingVelocityField:
    """Joint-eigenbasis velocity field of a commuting normal Kraus family.

    ``velocity[i, a]`` is the eigenvalue of the velocity operator on the
    joint eigenvector ``vectors[i, :, a]`` at momentum ``axis[i]``.  The
    ballistic limit of Q(t)/t is the pushforward of tr(rho(p) P_a(p)) dp
    under these eigenvalues, exposed by :meth:`ballistic_density`.
    """

    axis: NDArray[np.float64]
    velocity: NDArray[np.float64]
    vectors: NDArray[np.complex128]

    def ballistic_density(
        self, rho: InitialState, bins: int = 256
    ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Histogram (edges, density) of the limiting velocity law."""
        n = self.axis.size
        if rho.lattice_dim != 1 or rho.coin_dim != self.vectors.shape[1]:
            raise ValueError("initial state does not match the field")
        rho_grid = rho.density_on_grid(self.axis)
        w = np.einsum(
            "pia,pij,pja->pa", self.vectors.conj(), rho_grid, self.vectors
        ).real * (2.0 * np.pi / n)
        vels = self.velocity.reshape(-1)
        wts = w.reshape(-1)
        lo, hi = float(vels.min()), float(vels.max())
        span = max(hi - lo, 1e-12)
        pad = 1e-9 + 0.5 / bins
        edges = np.linspace(lo - pad * span, hi + pad * span, bins + 1)
        hist, _ = np.histogram(vels, bins=edges, weights=wts)
        return edges, hist / np.diff(edges)


def commuting_kraus_velocity(
    model: MarkovWalkModel, n_grid: int = 1024
) -> CommutingVelocityField:
    """Velocity operator field of a commuting normal Kraus family.

    Simultaneously diagonalizes the family on a momentum grid (through a
    fixed generic Hermitian combination), checks pairwise commutators and
    normality within 1e-10 plus the joint-eigenvalue separation condition
    sum_j conj(k_{j,a}) k_{j,b} != 1 for a != b, then differentiates the
    eigenvalue fields exactly:

        v_a(p) = -i sum_j conj(k_{j,a}(p)) <psi_a| K_j'(p) |psi_a>.

    For a symmetrized unitary pair (1 +/- W)/2 this halves the group
    velocities of W; for a probability mixture of commuting unitaries it
    is the probability-weighted sum of the individual velocity operators.
    """
    if model.lattice_dim != 1:
        raise ValueError("commuting_kraus_velocity supports 1D lattices")
    if model.state_count == 1:
        ops = list(model.channels[0])
    elif model.control.is_bernoulli():
        weights = model.control.stationary
        ops = [
            math.sqrt(weights[g]) * k
            for g, fam in enumerate(model.channels)
            for k in fam
        ]
    else:
        raise ValueError("commuting analysis requires memoryless control")
    d = model.coin_dim
    axis = -np.pi + 2.0 * np.pi * (np.arange(n_grid) + 1.0) / n_grid
    rng = np.random.default_rng(31415)
    mix = rng.normal(size=len(ops)) + 1j * rng.normal(size=len(ops))
    vel = np.empty((n_grid, d), dtype=np.float64)
    vecs = np.empty((n_grid, d, d), dtype=np.complex128)
    bad_joint: list[float] = []
    for i, p0 in enumerate(axis):
        kmats = [k.evaluate(p0) for k in ops]
        for a in kmats:
            if np.abs(a @ a.conj().T - a.conj().T @ a).max() > 1e-10:
                raise ValueError(f"Kraus factor not normal at p={p0:.4f}")
        for j, a in enumerate(kmats):
            for b in kmats[j + 1 :]:
                if np.abs(a @ b - b @ a).max() > 1e-10:
                    raise ValueError(
                        f"Kraus factors do not commute at p={p0:.4f}"
                    )
        herm = sum(
            c.real * (a + a.conj().T) - 1j * c.imag * (a - a.conj().T)
            for c, a in zip(mix, kmats)
        )
        _, u = np.linalg.eigh(herm)
        diag = [u.conj().T @ a @ u for a in kmats]
        offdiag = max(np.abs(m - np.diag(np.diag(m))).max() for m in diag)
        if offdiag > 1e-8:
            raise ValueError(
                f"joint diagonalization failed at p={p0:.4f} "
                f"(off-diagonal {offdiag:.2e}); spectra may cross"
            )
        eigvals = np.array([np.diag(m) for m in diag])
        dmats = [k.derivative(0).evaluate(p0) for k in ops]
        for a in range(d):
            phi = u[:, a]
            val = -1j * sum(
                np.conj(eigvals[j, a]) * (phi.conj() @ dmats[j] @ phi)
                for j in range(len(ops))
            )
            if abs(val.imag) > 1e-9:
                raise ValueError(
                    f"velocity eigenvalue has imaginary part {val.imag:.2e} "
                    f"at p={p0:.4f}"
                )
            vel[i, a] = val.real
        vecs[i] = u
        # gram[a, b] = 1 happens exactly when the branch eigenvalue vectors
        # coincide (Cauchy-Schwarz equality); that merging is fatal only when
        # the merged branches transport at different speeds
        gram = eigvals.conj().T @ eigvals
        for a in range(d):
            for b in range(a + 1, d):
                if abs(gram[a, b] - 1.0) < 1e-8 and abs(
                    vel[i, a] - vel[i, b]
                ) > 1e-9:
                    bad_joint.append(float(p0))
    if bad_joint:
        sample = ", ".join(f"{q:.4f}" for q in bad_joint[:5])
        raise ValueError(
            f"joint-eigenvalue condition sum_j conj(k_a) k_b != 1 fails at "
            f"{len(bad_joint)} grid points (e.g. p = {sample}); eigenvector "
            "branches merge there"
        )
    return CommutingVelocityField(axis, vel, vecs)


# ----------------------------------------------------------------------
# momentum-kicked walks
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class MomentumShiftAsymptotics:
    """Limit law of a momentum-kicked scalar walk.

    ``scaling`` is 'ballistic' (Q/t, kick-free) or 'diffusive'
    (Q/sqrt(t)).  ``density`` tabulates the law on ``x_grid``;
    ``variance`` is its exact second central moment.
    """

    scaling: str
    x_grid: NDArray[np.float64]
    density: NDArray[np.float64]
    variance: float


#: the kick-free scalar family K1 = (1 + e^{ip})/2, K2 = (1 - e^{-ip})/2
_KICK_FREE_COEFFS = ({0: 0.5, 1: 0.5}, {0: 0.5, -1: -0.5})


def momentum_shift_asymptotics(
    handle: MomentumShiftModel,
    rho: InitialState,
    x_grid: ArrayLike,
) -> MomentumShiftAsymptotics:
    """Asymptotic position law of the scalar walk with momentum kick q.

    q = 0: the kick-free walk is the plain scalar model, ballistic with
    v(p) = cos(p)/2; the density of Q/t is the pushforward of the initial
    momentum density, divergent at the band edges +-1/2, zero outside.

    q != 0 mod pi: Q/sqrt(t) is Gaussian with variance 3/8 regardless of
    the initial state — the kick averages all momentum dependence away.

    q = pi: the kick has period 2 and the limit keeps a memory of the
    initial momentum density through a cos(2p) average; the density is
    the numerical inverse Fourier transform of

        C(lam) = e^{-3 lam^2/16} integral dp rho(p) e^{lam^2 cos(2p)/16},

    with variance 3/8 - <cos 2p>/8.
    """
    if rho.lattice_dim != 1 or rho.coin_dim != 1:
        raise ValueError("momentum-kicked walks are scalar 1D models")
    x = np.asarray(x_grid, dtype=np.float64).ravel()
    n = 4096
    paxis = _midpoint_axis(n)
    dp = 2.0 * np.pi / n
    pd = np.einsum("pii->p", rho.density_on_grid(paxis)).real
    if handle.branch == "ballistic":
        vfun = scalar_velocity(scalar_kraus_model(list(_KICK_FREE_COEFFS)))
        probe = np.linspace(-3.0, 3.0, 7)
        if np.abs(vfun(probe) - np.cos(probe) / 2.0).max() > 1e-12:
            raise ValueError("kick-free scalar family drift is not cos(p)/2")
        dens = np.zeros_like(x)
        inside = np.abs(x) < 0.5
        root = np.sqrt(1.0 - 4.0 * x[inside] ** 2)
        pstar = np.arccos(2.0 * x[inside])  # the preimage in (0, pi)

        def rho_at(q):
            return np.interp(q, paxis, pd, period=2.0 * np.pi)

        dens[inside] = 2.0 * (rho_at(pstar) + rho_at(-pstar)) / root
        mean = float(np.sum(pd * np.cos(paxis) / 2.0) * dp)
        msq = float(np.sum(pd * np.cos(paxis) ** 2 / 4.0) * dp)
        return MomentumShiftAsymptotics("ballistic", x, dens, msq - mean**2)
    if handle.branch == "generic":
        dens = 2.0 / math.sqrt(3.0 * math.pi) * np.exp(-4.0 * x * x / 3.0)
        return MomentumShiftAsymptotics("diffusive", x, dens, 3.0 / 8.0)
    # period-2 kick: inverse transform of the rho-dressed Gaussian
    lams = np.linspace(-16.0, 16.0, 1025)
    inner = np.exp(np.outer(lams**2, np.cos(2.0 * paxis)) / 16.0) @ pd * dp
    cf = np.exp(-3.0 * lams**2 / 16.0) * inner
    dl = lams[1] - lams[0]
    dens = (np.exp(-1j * np.outer(x, lams)) @ cf).real * dl / (2.0 * np.pi)
    mean_cos = float(np.sum(pd * np.cos(2.0 * paxis)) * dp)
    return MomentumShiftAsymptotics(
        "diffusive", x, dens, 3.0 / 8.0 - mean_cos / 8.0
    )
