"""Matrix-valued trigonometric polynomials on the Brillouin zone.

Every translation-invariant walk or Kraus operator with finite step size is,
in momentum space, a matrix-valued trigonometric polynomial

    W(p) = sum_x C_x exp(i p . x),        x in a finite subset of Z^s,

with d x d complex coefficient matrices C_x.  This module provides the
algebra of such polynomials (evaluation, product, directional derivatives,
adjoint), certified unitarity / Kraus-normalization checks, and the winding
index of the determinant, which is the walk's topological invariant.

Coefficients are stored sparsely, keyed by the integer offset vector.  A
polynomial of per-axis degree D is determined by its values on any uniform
grid with more than 2D points per axis, so grid checks of polynomial
identities (unitarity, normalization) certify them for *all* momenta.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

__all__ = [
    "TrigPolyMatrix",
    "NormalizationReport",
    "check_unitary",
    "check_kraus_normalization",
    "index",
]

#: Coefficient matrices with norm below this are dropped after arithmetic.
PRUNE_TOL = 1e-14


def _as_offset(x: Sequence[int] | int, s: int) -> tuple[int, ...]:
    """Coerce an offset to a length-s tuple of Python ints."""
    if np.isscalar(x):
        off = (int(x),)
    else:
        off = tuple(int(v) for v in x)
    if len(off) != s:
        raise ValueError(f"offset {off} has length {len(off)}, expected {s}")
    return off


class TrigPolyMatrix:
    """A finite sum W(p) = sum_x C_x exp(i p.x) of d x d matrix monomials.

    Parameters
    ----------
    lattice_dim : int
        Spatial dimension s >= 1 of the lattice Z^s.
    coin_dim : int
        Internal (coin) dimension d >= 1.
    coeffs : mapping
        Finite map from integer offset vectors to complex (d, d) arrays.
        Entries with Frobenius norm below ``PRUNE_TOL`` are discarded.

    Instances are immutable: coefficient arrays are copied in and marked
    read-only, and all operations return new polynomials.
    """

    __slots__ = ("lattice_dim", "coin_dim", "_coeffs")

    def __init__(
        self,
        lattice_dim: int,
        coin_dim: int,
        coeffs: Mapping[Sequence[int] | int, ArrayLike],
    ) -> None:
        if lattice_dim < 1:
            raise ValueError(f"lattice_dim must be positive, got {lattice_dim}")
        if coin_dim < 1:
            raise ValueError(f"coin_dim must be positive, got {coin_dim}")
        object.__setattr__(self, "lattice_dim", int(lattice_dim))
        object.__setattr__(self, "coin_dim", int(coin_dim))
        stored: dict[tuple[int, ...], NDArray[np.complex128]] = {}
        for x, c in coeffs.items():
            off = _as_offset(x, lattice_dim)
            mat = np.array(c, dtype=np.complex128)
            if mat.shape != (coin_dim, coin_dim):
                raise ValueError(
                    f"coefficient at {off} has shape {mat.shape}, "
                    f"expected {(coin_dim, coin_dim)}"
                )
            if np.linalg.norm(mat) >= PRUNE_TOL:
                mat.setflags(write=False)
                stored[off] = mat
        object.__setattr__(self, "_coeffs", stored)

    def __setattr__(self, name, value):  # pragma: no cover - guard rail
        raise AttributeError("TrigPolyMatrix is immutable")

    # ------------------------------------------------------------------
    # basic introspection
    # ------------------------------------------------------------------

    @property
    def coeffs(self) -> dict[tuple[int, ...], NDArray[np.complex128]]:
        """Copy of the coefficient mapping (arrays remain read-only views)."""
        return dict(self._coeffs)

    def coefficient(self, x: Sequence[int] | int) -> NDArray[np.complex128]:
        """C_x, or the zero matrix if x is outside the neighborhood."""
        off = _as_offset(x, self.lattice_dim)
        c = self._coeffs.get(off)
        if c is None:
            return np.zeros((self.coin_dim, self.coin_dim), dtype=np.complex128)
        return c

    @property
    def support(self) -> list[tuple[int, ...]]:
        """The neighborhood scheme: offsets carrying nonzero coefficients."""
        return sorted(self._coeffs)

    @property
    def axis_degrees(self) -> tuple[int, ...]:
        """Per-axis degree max_x |x_j|; zeros for the zero polynomial."""
        if not self._coeffs:
            return (0,) * self.lattice_dim
        arr = np.array(list(self._coeffs), dtype=np.int64)
        return tuple(int(v) for v in np.abs(arr).max(axis=0))

    @property
    def max_degree(self) -> int:
        """Largest per-axis degree (bounds the one-step position spread)."""
        return max(self.axis_degrees)

    def __iter__(self) -> Iterator[tuple[tuple[int, ...], NDArray[np.complex128]]]:
        return iter(self._coeffs.items())

    def __repr__(self) -> str:
        return (
            f"TrigPolyMatrix(s={self.lattice_dim}, d={self.coin_dim}, "
            f"support={self.support})"
        )

    # ------------------------------------------------------------------
    # evaluation
    # ------------------------------------------------------------------

    def evaluate(self, p: ArrayLike) -> NDArray[np.complex128]:
        """Evaluate W(p) = sum_x C_x exp(i p.x) at a single momentum.

        Parameters
        ----------
        p : array_like
            Real momentum vector of length ``lattice_dim`` (a scalar is
            accepted when s = 1).

        Returns
        -------
        (d, d) complex ndarray
        """
        pv = np.atleast_1d(np.asarray(p, dtype=np.float64))
        if pv.shape != (self.lattice_dim,):
            raise ValueError(
                f"momentum has shape {pv.shape}, expected ({self.lattice_dim},)"
            )
        out = np.zeros((self.coin_dim, self.coin_dim), dtype=np.complex128)
        for x, c in self._coeffs.items():
            out += c * np.exp(1j * float(np.dot(pv, x)))
        return out

    def evaluate_grid(self, *axes: ArrayLike) -> NDArray[np.complex128]:
        """Evaluate on a tensor grid, one 1-D momentum array per axis.

        Returns an array of shape ``(len(axes[0]), ..., len(axes[s-1]), d, d)``.
        This is the vectorized work-horse behind dispersion sweeps and the
        FFT evolution kernels.
        """
        if len(axes) != self.lattice_dim:
            raise ValueError(
                f"need {self.lattice_dim} axis arrays, got {len(axes)}"
            )
        grids = [np.asarray(a, dtype=np.float64).ravel() for a in axes]
        shape = tuple(g.size for g in grids) + (self.coin_dim, self.coin_dim)
        out = np.zeros(shape, dtype=np.complex128)
        for x, c in self._coeffs.items():
            phase = np.ones((), dtype=np.complex128)
            for j, g in enumerate(grids):
                f = np.exp(1j * g * x[j])
                # broadcast axis j of the tensor grid
                idx = [None] * self.lattice_dim
                idx[j] = slice(None)
                phase = phase * f[tuple(idx)]
            out += phase[..., None, None] * c
        return out

    # ------------------------------------------------------------------
    # algebra
    # ------------------------------------------------------------------

    def __matmul__(self, other: "TrigPolyMatrix") -> "TrigPolyMatrix":
        return multiply(self, other)

    def __add__(self, other: "TrigPolyMatrix") -> "TrigPolyMatrix":
        if not isinstance(other, TrigPolyMatrix):
            return NotImplemented
        self._check_compatible(other)
        acc: dict[tuple[int, ...], NDArray[np.complex128]] = {
            x: c.copy() for x, c in self._coeffs.items()
        }
        for x, c in other._coeffs.items():
            acc[x] = acc.get(x, 0) + c
        return TrigPolyMatrix(self.lattice_dim, self.coin_dim, acc)

    def __sub__(self, other: "TrigPolyMatrix") -> "TrigPolyMatrix":
        return self + (-1.0) * other

    def __mul__(self, scalar: complex) -> "TrigPolyMatrix":
        if isinstance(scalar, TrigPolyMatrix):
            raise TypeError("use @ for the matrix product of polynomials")
        z = complex(scalar)
        return TrigPolyMatrix(
            self.lattice_dim,
            self.coin_dim,
            {x: z * c for x, c in self._coeffs.items()},
        )

    __rmul__ = __mul__

    def _check_compatible(self, other: "TrigPolyMatrix") -> None:
        if (
            other.lattice_dim != self.lattice_dim
            or other.coin_dim != self.coin_dim
        ):
            raise ValueError(
                "polynomials have mismatched dimensions: "
                f"(s={self.lattice_dim}, d={self.coin_dim}) vs "
                f"(s={other.lattice_dim}, d={other.coin_dim})"
            )

    def derivative(self, axis: int) -> "TrigPolyMatrix":
        """d/dp_axis, i.e. coefficient map C_x -> i x_axis C_x."""
        if not 0 <= axis < self.lattice_dim:
            raise ValueError(
                f"axis {axis} out of range for lattice_dim {self.lattice_dim}"
            )
        return TrigPolyMatrix(
            self.lattice_dim,
            self.coin_dim,
            {x: (1j * x[axis]) * c for x, c in self._coeffs.items()},
        )

    def directional_derivative(self, direction: ArrayLike) -> "TrigPolyMatrix":
        """(lam . grad) applied once, for a real direction vector lam."""
        lam = np.atleast_1d(np.asarray(direction, dtype=np.float64))
        if lam.shape != (self.lattice_dim,):
            raise ValueError(
                f"direction has shape {lam.shape}, expected ({self.lattice_dim},)"
            )
        return TrigPolyMatrix(
            self.lattice_dim,
            self.coin_dim,
            {
                x: (1j * float(np.dot(lam, x))) * c
                for x, c in self._coeffs.items()
            },
        )

    def adjoint(self) -> "TrigPolyMatrix":
        """Pointwise adjoint W(p)*, i.e. coefficients x -> C_{-x}^dagger."""
        return TrigPolyMatrix(
            self.lattice_dim,
            self.coin_dim,
            {
                tuple(-v for v in x): c.conj().T
                for x, c in self._coeffs.items()
            },
        )

    def allclose(self, other: "TrigPolyMatrix", tol: float = 1e-12) -> bool:
        """Coefficient-wise comparison after pruning (polynomial equality)."""
        self._check_compatible(other)
        for x in set(self._coeffs) | set(other._coeffs):
            if np.linalg.norm(self.coefficient(x) - other.coefficient(x)) > tol:
                return False
        return True

    # ------------------------------------------------------------------
    # constructors
    # ------------------------------------------------------------------

    @staticmethod
    def constant(matrix: ArrayLike, lattice_dim: int = 1) -> "TrigPolyMatrix":
        """Momentum-independent polynomial with a single coefficient at 0."""
        mat = np.asarray(matrix, dtype=np.complex128)
        d = mat.shape[0]
        return TrigPolyMatrix(lattice_dim, d, {(0,) * lattice_dim: mat})

    @staticmethod
    def identity(coin_dim: int, lattice_dim: int = 1) -> "TrigPolyMatrix":
        """The constant identity polynomial."""
        return TrigPolyMatrix.constant(np.eye(coin_dim), lattice_dim)


def multiply(a: TrigPolyMatrix, b: TrigPolyMatrix) -> TrigPolyMatrix:
    """Pointwise matrix product (a b)(p) = a(p) b(p) by coefficient convolution."""
    a._check_compatible(b)
    acc: dict[tuple[int, ...], NDArray[np.complex128]] = {}
    for xa, ca in a:
        for xb, cb in b:
            key = tuple(u + v for u, v in zip(xa, xb))
            prod = ca @ cb
            if key in acc:
                acc[key] = acc[key] + prod
            else:
                acc[key] = prod
    return TrigPolyMatrix(a.lattice_dim, a.coin_dim, acc)


@dataclass(frozen=True)
class NormalizationReport:
    """Outcome of a grid-certified polynomial identity check.

    ``max_deviation`` is the largest spectral norm of the defect matrix over
    the certifying grid.  Because the defect is itself a trigonometric
    polynomial, passing on a grid with more than twice its degree per axis
    certifies the identity for every momentum.
    """

    passed: bool
    max_deviation: float
    grid_per_axis: int
    tol: float
    kind: str

    def __bool__(self) -> bool:
        return self.passed


def _identity_defect_sup(
    terms: Iterable[tuple[TrigPolyMatrix, TrigPolyMatrix]],
    lattice_dim: int,
    coin_dim: int,
    grid_per_axis: int,
) -> float:
    """Sup over a uniform grid of || sum_i A_i(p) B_i(p) - 1 || (spectral norm)."""
    axes = [np.linspace(-np.pi, np.pi, grid_per_axis, endpoint=False)] * lattice_dim
    acc = None
    for a, b in terms:
        va = a.evaluate_grid(*axes)
        vb = b.evaluate_grid(*axes)
        prod = va @ vb
        acc = prod if acc is None else acc + prod
    acc = acc - np.eye(coin_dim)
    # defect is Hermitian here, so the spectral norm is the largest |eigenvalue|
    ev = np.linalg.eigvalsh(acc)
    return float(np.abs(ev).max())


def check_unitary(
    poly: TrigPolyMatrix,
    grid_per_axis: int | None = None,
    tol: float = 1e-10,
) -> NormalizationReport:
    """Certify W(p) W(p)* = 1 for all p by a sufficiently fine grid check.

    Parameters
    ----------
    poly : TrigPolyMatrix
    grid_per_axis : int, optional
        Number of grid points per axis; must be at least 2*max_degree + 1
        (the default uses exactly that bound, which already certifies the
        polynomial identity W W* - 1 = 0 of per-axis degree <= 2*max_degree).
    tol : float
        Pass threshold on the grid sup of the spectral-norm deviation.
    """
    need = 2 * poly.max_degree + 1
    n = need if grid_per_axis is None else int(grid_per_axis)
    if n < need:
        raise ValueError(
            f"grid_per_axis={n} cannot certify unitarity; need >= {need}"
        )
    dev = _identity_defect_sup(
        [(poly, poly.adjoint())], poly.lattice_dim, poly.coin_dim, n
    )
    return NormalizationReport(dev <= tol, dev, n, tol, "unitarity")


def check_kraus_normalization(
    family: Sequence[TrigPolyMatrix],
    grid_per_axis: int | None = None,
    tol: float = 1e-10,
) -> NormalizationReport:
    """Certify the Kraus normalization sum_i K_i(p)* K_i(p) = 1 for all p."""
    if not family:
        raise ValueError("empty Kraus family")
    first = family[0]
    for k in family[1:]:
        first._check_compatible(k)
    need = 2 * max(k.max_degree for k in family) + 1
    n = need if grid_per_axis is None else int(grid_per_axis)
    if n < need:
        raise ValueError(
            f"grid_per_axis={n} cannot certify normalization; need >= {need}"
        )
    dev = _identity_defect_sup(
        [(k.adjoint(), k) for k in family],
        first.lattice_dim,
        first.coin_dim,
        n,
    )
    return NormalizationReport(dev <= tol, dev, n, tol, "kraus normalization")


def index(
    poly: TrigPolyMatrix,
    samples_per_axis: int | None = None,
) -> NDArray[np.int64]:
    """Winding index of det W along each momentum axis.

    For a unitary polynomial, det W(p) = det W(0) exp(i ind.p) with an
    integer vector ``ind``; component j is recovered as the accumulated
    phase winding of p_j -> det W(p_j e_j) over one period, divided by 2*pi.

    Phase increments between consecutive samples are required to stay below
    pi/2; otherwise sampling is refined (doubled, up to 4 times) to rule out
    branch aliasing.  A winding farther than 1e-6 from an integer raises,
    as does a vanishing determinant (both signal non-unitary input).

    Parameters
    ----------
    poly : TrigPolyMatrix
        Unitary polynomial (caller certifies via :func:`check_unitary`).
    samples_per_axis : int, optional
        Initial sample count; default max(4*max_degree*coin_dim, 16).

    Returns
    -------
    ndarray of int, shape (lattice_dim,)
    """
    s = poly.lattice_dim
    base = max(4 * poly.max_degree * poly.coin_dim, 16)
    n0 = base if samples_per_axis is None else max(int(samples_per_axis), 4)
    out = np.zeros(s, dtype=np.int64)
    for axis in range(s):
        n = n0
        for _ in range(5):  # initial sampling + up to 4 refinements
            grid = np.linspace(0.0, 2.0 * np.pi, n + 1)
            axes = [np.zeros(1)] * s
            axes[axis] = grid
            vals = poly.evaluate_grid(*axes)
            vals = np.moveaxis(vals, axis, 0).reshape(n + 1, poly.coin_dim, poly.coin_dim)
            dets = np.linalg.det(vals)
            if np.abs(dets).min() < 1e-12:
                raise ValueError(
                    "determinant vanishes along axis "
                    f"{axis}; index undefined (non-unitary input?)"
                )
            incs = np.angle(dets[1:] / dets[:-1])
            if np.abs(incs).max() < 0.5 * np.pi:
                break
            n *= 2
        else:
            raise ValueError(
                f"phase increments along axis {axis} stay >= pi/2 after "
                "4 refinements; aliased or non-unitary input"
            )
        winding = incs.sum() / (2.0 * np.pi)
        nearest = round(winding)
        if abs(winding - nearest) > 1e-6:
            raise ValueError(
                f"non-integer winding {winding:.3e} along axis {axis} "
                "(non-unitary or aliased input)"
            )
        out[axis] = nearest
    return out
