"""Walk families, control processes, and initial states.

Builders for every model family analyzed by the asymptotic machinery:

* single unitary walks (coin-shift form in 1D, two coin/shift rounds in 2D),
* Markov-controlled random-coin walks (a classical chain on a finite control
  set picks which unitary acts each step),
* Bernoulli Kraus families with the probability weights folded into the
  operators (dephased walk, scalar walks, symmetrized pairs),
* the momentum-shift walk, which transfers momentum and therefore lives
  outside the trigonometric-polynomial representation (special handle).

Conventions.  The elementary shift S = diag(exp(ip), exp(-ip)) moves the
first coin component one site to the right.  A 2x2 special unitary with an
overall phase is parametrized by a mixing angle and two phases,

    U = [[cos(mix) e^{i a},  sin(mix) e^{i b}],
         [-sin(mix) e^{-i b}, cos(mix) e^{-i a}]],

so that the coin-shift walk U.S has dispersion +/- arccos(cos(p + a) cos(mix)).
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .trigpoly import (
    TrigPolyMatrix,
    check_kraus_normalization,
    check_unitary,
)

__all__ = [
    "ControlProcess",
    "MarkovWalkModel",
    "InitialState",
    "MomentumShiftModel",
    "su2_coin",
    "shift_1d",
    "coin_shift_walk_1d",
    "hadamard_walk",
    "reflection_walk",
    "walk_2d",
    "hadamard_reflection_model",
    "dephased_hadamard_model",
    "scalar_kraus_model",
    "symmetrized_pair",
    "momentum_shift_model",
    "random_walk_model",
]

HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) / np.sqrt(2.0)


# ----------------------------------------------------------------------
# control process
# ----------------------------------------------------------------------

class ControlProcess:
    """A finite Markov chain selecting the quantum operation at each step.

    Parameters
    ----------
    transition : array_like, shape (n, n)
        Row-stochastic matrix; entry [g][h] is the probability m_g(h) of
        moving from control state g to h.  Rows must be nonnegative and sum
        to 1 within 1e-12.

    The stationary distribution is computed at construction by solving
    (M^T - 1) m = 0 together with the sum-to-one constraint in least
    squares; a residual above 1e-8 (no reliable stationary law) raises.
    """

    __slots__ = ("transition", "stationary")

    def __init__(self, transition: ArrayLike) -> None:
        m = np.array(transition, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"transition matrix must be square, got {m.shape}")
        if np.any(m < -1e-14):
            raise ValueError("transition matrix has negative entries")
        row_err = np.abs(m.sum(axis=1) - 1.0).max()
        if row_err > 1e-12:
            raise ValueError(
                f"transition rows must sum to 1 (max deviation {row_err:.2e})"
            )
        n = m.shape[0]
        a = np.vstack([m.T - np.eye(n), np.ones((1, n))])
        b = np.zeros(n + 1)
        b[-1] = 1.0
        mbar, *_ = np.linalg.lstsq(a, b, rcond=None)
        residual = float(np.linalg.norm((m.T - np.eye(n)) @ mbar))
        if residual > 1e-8:
            raise ValueError(
                f"stationary distribution solve failed (residual {residual:.2e})"
            )
        mbar = np.clip(mbar, 0.0, None)
        mbar /= mbar.sum()
        m.setflags(write=False)
        mbar.setflags(write=False)
        object.__setattr__(self, "transition", m)
        object.__setattr__(self, "stationary", mbar)

    def __setattr__(self, name, value):  # pragma: no cover
        raise AttributeError("ControlProcess is immutable")

    @property
    def state_count(self) -> int:
        return self.transition.shape[0]

    def is_bernoulli(self, tol: float = 1e-12) -> bool:
        """True when all rows coincide (memoryless control)."""
        return bool(
            np.abs(self.transition - self.transition[0]).max() <= tol
        )

    def __repr__(self) -> str:
        return f"ControlProcess(n={self.state_count}, stationary={self.stationary})"


# ----------------------------------------------------------------------
# Markov walk model
# ----------------------------------------------------------------------

class MarkovWalkModel:
    """A control process plus one Kraus family per control state.

    ``channels[g]`` is the Kraus family (tuple of :class:`TrigPolyMatrix`)
    applied when the control is in state g; each family must satisfy
    sum_i K_i(p)* K_i(p) = 1 for all p.  ``unitary`` is True exactly when
    every family is a single unitary polynomial — the random-unitary case
    in which the diffusion matrix is guaranteed real positive semidefinite.
    """

    __slots__ = ("control", "channels", "unitary", "lattice_dim", "coin_dim")

    def __init__(
        self,
        control: ControlProcess,
        channels: Sequence[Sequence[TrigPolyMatrix]],
        normalization_tol: float = 1e-10,
    ) -> None:
        if len(channels) != control.state_count:
            raise ValueError(
                f"{control.state_count} control states but "
                f"{len(channels)} Kraus families"
            )
        fams = tuple(tuple(fam) for fam in channels)
        if not fams or not fams[0]:
            raise ValueError("empty Kraus family")
        s = fams[0][0].lattice_dim
        d = fams[0][0].coin_dim
        unitary = True
        for g, fam in enumerate(fams):
            for k in fam:
                if k.lattice_dim != s or k.coin_dim != d:
                    raise ValueError(
                        f"Kraus family {g} mixes lattice/coin dimensions"
                    )
            rep = check_kraus_normalization(fam, tol=normalization_tol)
            if not rep:
                raise ValueError(
                    f"Kraus family {g} violates normalization "
                    f"(deviation {rep.max_deviation:.2e})"
                )
            if len(fam) != 1 or not check_unitary(fam[0], tol=normalization_tol):
                unitary = False
        object.__setattr__(self, "control", control)
        object.__setattr__(self, "channels", fams)
        object.__setattr__(self, "unitary", bool(unitary))
        object.__setattr__(self, "lattice_dim", s)
        object.__setattr__(self, "coin_dim", d)

    def __setattr__(self, name, value):  # pragma: no cover
        raise AttributeError("MarkovWalkModel is immutable")

    @property
    def state_count(self) -> int:
        return self.control.state_count

    @property
    def max_degree(self) -> int:
        return max(k.max_degree for fam in self.channels for k in fam)

    def __repr__(self) -> str:
        sizes = [len(f) for f in self.channels]
        return (
            f"MarkovWalkModel(states={self.state_count}, kraus_per_state={sizes}, "
            f"s={self.lattice_dim}, d={self.coin_dim}, unitary={self.unitary})"
        )


# ----------------------------------------------------------------------
# initial states
# ----------------------------------------------------------------------

class InitialState:
    """Initial state: pure and finitely supported, or a momentum density.

    Pure form: a finite map from lattice sites to coin vectors with total
    norm 1.  The momentum density it induces is rho(p) = psi(p) psi(p)*/(2 pi)^s
    with psi(p) = sum_x psi(x) exp(i p.x), normalized so the Brillouin-zone
    integral of tr rho(p) is 1.

    Density form: a PSD matrix field tabulated on a uniform momentum grid
    (1D only); consumers on a different grid re-tabulate by periodic linear
    interpolation, while pure states are always evaluated exactly.
    """

    __slots__ = ("lattice_dim", "coin_dim", "amplitudes", "_grid", "_rho")

    def __init__(
        self,
        lattice_dim: int,
        coin_dim: int,
        amplitudes: Mapping[tuple[int, ...], ArrayLike] | None = None,
        momentum_grid: ArrayLike | None = None,
        momentum_density: ArrayLike | None = None,
    ) -> None:
        object.__setattr__(self, "lattice_dim", int(lattice_dim))
        object.__setattr__(self, "coin_dim", int(coin_dim))
        if (amplitudes is None) == (momentum_grid is None):
            raise ValueError(
                "provide exactly one of position amplitudes or momentum density"
            )
        if amplitudes is not None:
            amps: dict[tuple[int, ...], NDArray[np.complex128]] = {}
            for x, v in amplitudes.items():
                key = (int(x),) if np.isscalar(x) else tuple(int(u) for u in x)
                if len(key) != lattice_dim:
                    raise ValueError(f"site {key} has wrong dimension")
                vec = np.asarray(v, dtype=np.complex128).reshape(coin_dim)
                amps[key] = vec
            total = sum(float(np.vdot(v, v).real) for v in amps.values())
            if abs(total - 1.0) > 1e-12:
                raise ValueError(
                    f"pure state norm^2 = {total!r}, must be 1 within 1e-12"
                )
            object.__setattr__(self, "amplitudes", amps)
            object.__setattr__(self, "_grid", None)
            object.__setattr__(self, "_rho", None)
        else:
            if lattice_dim != 1:
                raise ValueError("tabulated momentum densities support s=1 only")
            grid = np.asarray(momentum_grid, dtype=np.float64).ravel()
            rho = np.asarray(momentum_density, dtype=np.complex128)
            if rho.shape != (grid.size, coin_dim, coin_dim):
                raise ValueError(
                    f"density shape {rho.shape} does not match grid/coin dims"
                )
            herm = np.abs(rho - rho.conj().transpose(0, 2, 1)).max()
            if herm > 1e-10:
                raise ValueError(f"density not Hermitian (deviation {herm:.2e})")
            eigs = np.linalg.eigvalsh(0.5 * (rho + rho.conj().transpose(0, 2, 1)))
            if eigs.min() < -1e-10:
                raise ValueError(
                    f"density not PSD (min eigenvalue {eigs.min():.2e})"
                )
            dp = 2.0 * np.pi / grid.size
            mass = float(np.einsum("pii->", rho).real * dp)
            if abs(mass - 1.0) > 1e-8:
                raise ValueError(f"trace integral {mass!r} must be 1 within 1e-8")
            object.__setattr__(self, "amplitudes", None)
            object.__setattr__(self, "_grid", grid)
            object.__setattr__(self, "_rho", rho)

    def __setattr__(self, name, value):  # pragma: no cover
        raise AttributeError("InitialState is immutable")

    # -- constructors ---------------------------------------------------

    @staticmethod
    def localized(
        coin_vector: ArrayLike,
        site: Sequence[int] | int = 0,
        lattice_dim: int = 1,
    ) -> "InitialState":
        """Pure state concentrated on one site (the paper's standard start)."""
        vec = np.asarray(coin_vector, dtype=np.complex128).ravel()
        key = (int(site),) * lattice_dim if np.isscalar(site) else tuple(site)
        return InitialState(lattice_dim, vec.size, {key: vec})

    @staticmethod
    def from_momentum_density(
        grid: ArrayLike, rho: ArrayLike
    ) -> "InitialState":
        rho_arr = np.asarray(rho, dtype=np.complex128)
        return InitialState(
            1, rho_arr.shape[-1], momentum_grid=grid, momentum_density=rho_arr
        )

    # -- queries --------------------------------------------------------

    @property
    def is_pure(self) -> bool:
        return self.amplitudes is not None

    @property
    def radius(self) -> int:
        """Max Chebyshev distance of the support from the origin (pure form)."""
        if not self.is_pure:
            raise ValueError("radius is defined for pure states only")
        if not self.amplitudes:
            return 0
        return max(max(abs(v) for v in x) for x in self.amplitudes)

    def momentum_amplitude(self, *axes: ArrayLike) -> NDArray[np.complex128]:
        """psi(p) = sum_x psi(x) exp(i p.x) on a tensor grid, shape grid+(d,)."""
        if not self.is_pure:
            raise ValueError("momentum amplitudes require a pure state")
        grids = [np.asarray(a, dtype=np.float64).ravel() for a in axes]
        if len(grids) != self.lattice_dim:
            raise ValueError(f"need {self.lattice_dim} axis arrays")
        shape = tuple(g.size for g in grids) + (self.coin_dim,)
        out = np.zeros(shape, dtype=np.complex128)
        for x, v in self.amplitudes.items():
            phase = np.ones((), dtype=np.complex128)
            for j, g in enumerate(grids):
                f = np.exp(1j * g * x[j])
                idx = [None] * self.lattice_dim
                idx[j] = slice(None)
                phase = phase * f[tuple(idx)]
            out += phase[..., None] * v
        return out

    def density_on_grid(self, grid: ArrayLike) -> NDArray[np.complex128]:
        """rho(p) tabulated on a 1D grid, normalized to unit trace integral."""
        g = np.asarray(grid, dtype=np.float64).ravel()
        if self.is_pure:
            if self.lattice_dim != 1:
                raise ValueError("density_on_grid supports s=1; use momentum_amplitude")
            psi = self.momentum_amplitude(g)
            return psi[:, :, None] * psi.conj()[:, None, :] / (2.0 * np.pi)
        if self._grid.size == g.size and np.allclose(self._grid, g, atol=1e-12):
            return self._rho
        # periodic linear re-tabulation onto the consumer's grid
        order = np.argsort(self._grid)
        gs = self._grid[order]
        rs = self._rho[order]
        gs_ext = np.concatenate([gs, [gs[0] + 2.0 * np.pi]])
        rs_ext = np.concatenate([rs, rs[:1]], axis=0)
        shifted = np.mod(g - gs[0], 2.0 * np.pi) + gs[0]
        out = np.empty((g.size, self.coin_dim, self.coin_dim), dtype=np.complex128)
        for i in range(self.coin_dim):
            for j in range(self.coin_dim):
                out[:, i, j] = np.interp(
                    shifted, gs_ext, rs_ext[:, i, j].real
                ) + 1j * np.interp(shifted, gs_ext, rs_ext[:, i, j].imag)
        return out

    def kernel_trace(self, p1: ArrayLike, p2: ArrayLike) -> NDArray[np.complex128]:
        """tr rho(p1, p2) of the momentum kernel, elementwise over 1D arrays.

        For a pure state the kernel is |psi(p1)><psi(p2)| / (2 pi)^s, so the
        trace is <psi(p2), psi(p1)> / (2 pi)^s.  Needed by the next-order
        characteristic function, whose leading factor is C0(l, p) = tr rho(p+l, p).
        """
        if not self.is_pure:
            raise ValueError("momentum kernel requires a pure state")
        if self.lattice_dim != 1:
            raise ValueError("kernel_trace supports s=1")
        a1 = self.momentum_amplitude(np.atleast_1d(p1))
        a2 = self.momentum_amplitude(np.atleast_1d(p2))
        return np.einsum("pd,pd->p", a2.conj(), a1) / (2.0 * np.pi)


# ----------------------------------------------------------------------
# elementary building blocks
# ----------------------------------------------------------------------

def su2_coin(mixing: float, diag_phase: float, offdiag_phase: float) -> NDArray[np.complex128]:
    """2x2 unitary [[cos m e^{ia}, sin m e^{ib}], [-sin m e^{-ib}, cos m e^{-ia}]]."""
    cm, sm = math.cos(mixing), math.sin(mixing)
    return np.array(
        [
            [cm * np.exp(1j * diag_phase), sm * np.exp(1j * offdiag_phase)],
            [-sm * np.exp(-1j * offdiag_phase), cm * np.exp(-1j * diag_phase)],
        ],
        dtype=np.complex128,
    )


def shift_1d() -> TrigPolyMatrix:
    """S = diag(exp(ip), exp(-ip)): first component right, second left."""
    up = np.diag([1.0, 0.0]).astype(np.complex128)
    down = np.diag([0.0, 1.0]).astype(np.complex128)
    return TrigPolyMatrix(1, 2, {(1,): up, (-1,): down})


def coin_shift_walk_1d(alpha: float, beta: float, gamma_phase: float) -> TrigPolyMatrix:
    """Coin-shift walk C.S with dispersion +/- arccos(cos(p + alpha) cos(beta)).

    ``alpha`` shifts the dispersion in momentum (diagonal coin phase),
    ``beta`` is the coin mixing angle controlling the band gap, and
    ``gamma_phase`` is the off-diagonal phase (it drops out of the spectrum
    but rotates the eigenvectors).  (0, 0, 0) gives the pure shift S.
    """
    coin = TrigPolyMatrix.constant(su2_coin(beta, alpha, gamma_phase))
    return coin @ shift_1d()


def hadamard_walk() -> TrigPolyMatrix:
    """The Hadamard walk H.S, dispersion pi/2 +/- arccos(sin p / sqrt 2)."""
    return TrigPolyMatrix.constant(HADAMARD) @ shift_1d()


def reflection_walk() -> TrigPolyMatrix:
    """sigma_1 . S: flips the coin every step, so the particle is reflected."""
    sigma1 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
    return TrigPolyMatrix.constant(sigma1) @ shift_1d()


def walk_2d(
    u1_params: Sequence[float], u2_params: Sequence[float]
) -> TrigPolyMatrix:
    """Two rounds of coin and axis shift on Z^2: W = U2 S2 U1 S1.

    Each parameter triple is (theta, chi, phi): diagonal phase, off-diagonal
    phase, mixing angle of the 2x2 coin.  The dispersion satisfies

        cos w = cos(p1+p2+theta1+theta2) cos(phi1) cos(phi2)
              - cos(p1-p2-chi1+chi2) sin(phi1) sin(phi2).
    """
    th1, ch1, ph1 = (float(v) for v in u1_params)
    th2, ch2, ph2 = (float(v) for v in u2_params)
    up = np.diag([1.0, 0.0]).astype(np.complex128)
    down = np.diag([0.0, 1.0]).astype(np.complex128)
    s1 = TrigPolyMatrix(2, 2, {(1, 0): up, (-1, 0): down})
    s2 = TrigPolyMatrix(2, 2, {(0, 1): up, (0, -1): down})
    u1 = TrigPolyMatrix.constant(su2_coin(ph1, th1, ch1), lattice_dim=2)
    u2 = TrigPolyMatrix.constant(su2_coin(ph2, th2, ch2), lattice_dim=2)
    return u2 @ s2 @ u1 @ s1


# ----------------------------------------------------------------------
# decoherent model builders
# ----------------------------------------------------------------------

def hadamard_reflection_model(
    epsilon: float, markov_rates: tuple[float, float] | None = None
) -> MarkovWalkModel:
    """Hadamard walk randomly interrupted by reflection steps.

    Control state 1 applies the Hadamard walk H.S, state 2 the reflection
    walk sigma_1.S.  With ``markov_rates=(m1, m2)`` the control chain has
    transition rows (m1, 1-m1) and (1-m2, m2); both rates must lie in
    [0, 1) so some power of the chain is strictly positive.  Without rates
    the control is Bernoulli — reflection picked i.i.d. with probability
    ``epsilon`` — encoded as m1 = 1 - m2 = 1 - epsilon.  The channels stay
    unit-normalized unitaries; all weights live in the control process.
    """
    if markov_rates is None:
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
        m1, m2 = 1.0 - epsilon, epsilon
    else:
        m1, m2 = (float(v) for v in markov_rates)
        if not (0.0 <= m1 < 1.0 and 0.0 <= m2 < 1.0):
            raise ValueError(
                "markov rates must lie in [0, 1); m1=1 or m2=1 makes the "
                f"chain non-mixing (got {markov_rates})"
            )
    control = ControlProcess([[m1, 1.0 - m1], [1.0 - m2, m2]])
    return MarkovWalkModel(control, [[hadamard_walk()], [reflection_walk()]])


def dephased_hadamard_model(theta: float, epsilon: float) -> MarkovWalkModel:
    """Hadamard walk dephased by a random extra coin rotation R(theta).

    Single-state Bernoulli Kraus family
    K1 = sqrt(epsilon) H S, K2 = sqrt(1-epsilon) H R(theta) S with
    R(theta) = diag(e^{i theta}, e^{-i theta}): the undisturbed walk acts
    with probability epsilon, the rotated walk with probability 1-epsilon.
    theta in {0, pi} makes K2 proportional to K1 (commuting family); the
    model still builds, and the assumption diagnostics flag it downstream.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    rot = TrigPolyMatrix.constant(np.diag([np.exp(1j * theta), np.exp(-1j * theta)]))
    h = TrigPolyMatrix.constant(HADAMARD)
    k1 = math.sqrt(epsilon) * (h @ shift_1d())
    k2 = math.sqrt(1.0 - epsilon) * (h @ rot @ shift_1d())
    return MarkovWalkModel(ControlProcess([[1.0]]), [[k1, k2]])


def scalar_kraus_model(
    coefficients: Sequence[Mapping[int, complex]]
) -> MarkovWalkModel:
    """Scalar (coin-dimension 1) walk from Kraus coefficients a_{ik}.

    K_i(p) = sum_k a_{ik} exp(i p k) in the momentum convention.  The
    normalization sum_{i,k} conj(a_{i,k+x}) a_{ik} = delta_{0,x} is checked
    exactly on the coefficients (within 1e-12) before building the model.
    """
    if not coefficients:
        raise ValueError("need at least one Kraus coefficient family")
    offsets = sorted({k for fam in coefficients for k in fam})
    span = offsets[-1] - offsets[0] if offsets else 0
    for x in range(-span, span + 1):
        acc = 0.0 + 0.0j
        for fam in coefficients:
            for k, a in fam.items():
                acc += np.conj(fam.get(k + x, 0.0)) * a
        target = 1.0 if x == 0 else 0.0
        if abs(acc - target) > 1e-12:
            raise ValueError(
                f"normalization sum at offset {x} is {acc!r}, expected {target}"
            )
    family = [
        TrigPolyMatrix(1, 1, {(k,): np.array([[a]]) for k, a in fam.items()})
        for fam in coefficients
    ]
    return MarkovWalkModel(ControlProcess([[1.0]]), [family])


def symmetrized_pair(w: TrigPolyMatrix) -> MarkovWalkModel:
    """The commuting normal pair K1 = (1+W)/2, K2 = (1-W)/2 of a unitary W."""
    rep = check_unitary(w)
    if not rep:
        raise ValueError(
            f"symmetrized_pair requires a unitary walk "
            f"(deviation {rep.max_deviation:.2e})"
        )
    one = TrigPolyMatrix.identity(w.coin_dim, w.lattice_dim)
    k1 = 0.5 * (one + w)
    k2 = 0.5 * (one - w)
    fam = [k for k in (k1, k2) if k.support]  # w = 1 degenerates to K2 = 0
    return MarkovWalkModel(ControlProcess([[1.0]]), [fam])


# ----------------------------------------------------------------------
# momentum-shift walk (outside the trig-poly representation)
# ----------------------------------------------------------------------

class MomentumShiftModel:
    """The scalar walk with a momentum kick q = 2 pi n / m per step.

    Momentum-space action (authoritative convention):

        (K1 psi)(p) = (1 + e^{i(p-q)}) psi(p-q) / 2,
        (K2 psi)(p) = (1 - e^{-i(p-q)}) psi(p-q) / 2.

    The kick violates the no-momentum-transfer assumption, so this is a
    special handle consumed only by the scalar density evolver and the
    dedicated asymptotic analyzer — not a :class:`TrigPolyMatrix` model.
    q = 0 (m = 1) reduces to the scalar walk; q = pi (m = 2) is the
    period-2 branch with its own limit law.
    """

    __slots__ = ("n", "m")

    def __init__(self, n: int, m: int) -> None:
        n, m = int(n), int(m)
        if m < 1:
            raise ValueError(f"m must be >= 1, got {m}")
        if math.gcd(n % m if m > 1 else 0, m) != 1 and m > 1:
            raise ValueError(f"(n, m) = ({n}, {m}) must be coprime")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "m", m)

    def __setattr__(self, name, value):  # pragma: no cover
        raise AttributeError("MomentumShiftModel is immutable")

    @property
    def q(self) -> float:
        return 2.0 * np.pi * self.n / self.m

    @property
    def period(self) -> int:
        """Smallest T with T q = 0 mod 2 pi (the momentum-kick period)."""
        return self.m

    @property
    def branch(self) -> str:
        """Asymptotic class: 'ballistic' (q=0), 'period-2' (q=pi), 'generic'."""
        if self.m == 1:
            return "ballistic"
        if self.m == 2:
            return "period-2"
        return "generic"

    def position_kraus_factors(
        self, sites: NDArray[np.int64]
    ) -> tuple[NDArray[np.complex128], NDArray[np.complex128]]:
        """Per-site phase e^{-i q x} common to both Kraus operators, twice.

        The position-space action derived from the momentum convention is
        (K1 psi)(x) = e^{-iqx} (psi(x) + psi(x-1)) / 2 and
        (K2 psi)(x) = e^{-iqx} (psi(x) - psi(x+1)) / 2.
        """
        phase = np.exp(-1j * self.q * sites.astype(np.float64))
        return phase, phase

    def __repr__(self) -> str:
        return f"MomentumShiftModel(q=2*pi*{self.n}/{self.m}, branch={self.branch!r})"


def momentum_shift_model(n: int, m: int) -> MomentumShiftModel:
    """Momentum-shift walk with kick q = 2 pi n / m, (n, m) coprime."""
    return MomentumShiftModel(n, m)


# ----------------------------------------------------------------------
# random ensembles (property tests and the self-consistency acceptance run)
# ----------------------------------------------------------------------

def random_walk_model(
    rng: np.random.Generator,
    n_states: int = 2,
    coin_dim: int = 2,
    scalar_shift_prob: float = 0.25,
) -> MarkovWalkModel:
    """Random unitary-per-state model: Haar coins over random shift types.

    Each control state applies C_g . S with a Haar-random coin C_g; with
    probability ``scalar_shift_prob`` the standard shift is replaced by the
    scalar shift e^{ip} 1 (index d instead of 0), exercising nonzero
    mean-index drift.  Transition rows are Dirichlet draws floored at 0.05
    so the chain mixes.
    """
    rows = rng.dirichlet(np.ones(n_states), size=n_states)
    rows = np.clip(rows, 0.05, None)
    rows /= rows.sum(axis=1, keepdims=True)
    control = ControlProcess(rows)
    scalar_shift = TrigPolyMatrix(
        1, coin_dim, {(1,): np.eye(coin_dim, dtype=np.complex128)}
    )
    channels = []
    for _ in range(n_states):
        z = rng.normal(size=(coin_dim, coin_dim)) + 1j * rng.normal(
            size=(coin_dim, coin_dim)
        )
        q, r = np.linalg.qr(z)
        coin = q * np.exp(-1j * np.angle(np.diag(r)))[None, :]
        if coin_dim == 2 and rng.random() >= scalar_shift_prob:
            base = shift_1d()
        else:
            base = scalar_shift
        channels.append([TrigPolyMatrix.constant(coin) @ base])
    return MarkovWalkModel(control, channels)
