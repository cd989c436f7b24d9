"""Geometry and Fourier analysis on the discrete torus Z_n^d.

Fields are numpy arrays of shape (n,)*d in row-major order (axis 0 slowest).
Array index i along an axis represents the lattice coordinate
((i + n//2) % n) - n//2, i.e. sites live in [-n/2, n/2)^d under wraparound.

Conventions, used consistently by every downstream module:

* Laplacian is the unnormalized graph Laplacian
  (Dv)(x) = sum_{y ~ x} (v(y) - v(x)), neighbors counted with multiplicity,
  so n = 2 has doubled edges.  Its eigenvalue on the character chi_w is
  lam_w = -4 sum_i sin^2(pi w_i / n).
* Forward transform carries the 1/n^d factor:
  vhat(w) = n^-d sum_x v(x) conj(chi_w(x)) with chi_w(x) = exp(2 pi i x.w/n);
  the inverse is v(x) = sum_w vhat(w) chi_w(x).
* Poisson solves fix the mean-zero gauge vhat(0) = 0.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TorusGrid",
    "SiteField",
    "NonConservedMassError",
    "character",
    "laplacian_apply",
    "laplacian_eigenvalue",
    "laplacian_eigenvalues",
    "dft_forward",
    "dft_inverse",
    "poisson_solve",
    "dump_site_field",
    "load_site_field",
]


class NonConservedMassError(ValueError):
    """Input violates a mass-conservation / mean-zero precondition."""


@dataclass(frozen=True)
class TorusGrid:
    """Periodic cubic lattice Z_n^d; every site has exactly 2d neighbors."""

    d: int
    n: int

    def __post_init__(self) -> None:
        if not 1 <= int(self.d) <= 4:
            raise ValueError(f"dimension must be in 1..4, got {self.d}")
        if int(self.n) < 2:
            raise ValueError(f"side length must be >= 2, got {self.n}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def n_sites(self) -> int:
        return self.n**self.d

    def axis_coordinates(self) -> np.ndarray:
        """Centered coordinate of each array index along one axis."""
        half = self.n // 2
        return ((np.arange(self.n) + half) % self.n) - half

    def index_of(self, site) -> tuple[int, ...]:
        """Array index of a site given in centered coordinates (wraps mod n)."""
        site = np.atleast_1d(np.asarray(site, dtype=int))
        if site.shape != (self.d,):
            raise ValueError(f"site must have {self.d} coordinates, got {site.shape}")
        return tuple(int(c) % self.n for c in site)

    def in_dual_window(self, w) -> bool:
        """True if every component of w lies in [-n/2, n/2)."""
        w = np.atleast_1d(np.asarray(w, dtype=int))
        lo = -(self.n // 2)
        hi = self.n - (self.n // 2)  # exclusive
        return w.shape == (self.d,) and bool(np.all((w >= lo) & (w < hi)))


@dataclass
class SiteField:
    """One real (or complex, for spectral data) value per torus site."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} != grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite entries")

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "SiteField":
        return cls(grid, np.zeros(grid.shape))

    def copy(self) -> "SiteField":
        return SiteField(self.grid, self.values.copy())


def character(grid: TorusGrid, w) -> SiteField:
    """The character chi_w(x) = exp(2 pi i x.w / n) as a complex field."""
    w = np.atleast_1d(np.asarray(w, dtype=int))
    if w.shape != (grid.d,):
        raise ValueError(f"mode must have {grid.d} components")
    out = np.ones(grid.shape, dtype=complex)
    coords = grid.axis_coordinates()
    for ax in range(grid.d):
        phase = np.exp(2j * np.pi * coords * w[ax] / grid.n)
        shape = [1] * grid.d
        shape[ax] = grid.n
        out = out * phase.reshape(shape)
    return SiteField(grid, out)


def laplacian_apply(grid: TorusGrid, v: SiteField) -> SiteField:
    """Unnormalized graph Laplacian: (Dv)(x) = sum_{y~x} (v(y) - v(x))."""
    a = v.values
    out = np.zeros_like(a)
    for ax in range(grid.d):
        out = out + (np.roll(a, 1, axis=ax) - a) + (np.roll(a, -1, axis=ax) - a)
    return SiteField(grid, out)


def laplacian_eigenvalues(grid: TorusGrid) -> np.ndarray:
    """Array of lam_w = -4 sum_i sin^2(pi w_i/n) over the whole dual grid."""
    per_axis = -4.0 * np.sin(np.pi * np.arange(grid.n) / grid.n) ** 2
    out = np.zeros(grid.shape)
    for ax in range(grid.d):
        shape = [1] * grid.d
        shape[ax] = grid.n
        out = out + per_axis.reshape(shape)
    return out


def laplacian_eigenvalue(grid: TorusGrid, w) -> float:
    """Eigenvalue of the Laplacian on the character chi_w."""
    w = np.atleast_1d(np.asarray(w, dtype=int))
    if not grid.in_dual_window(w):
        raise ValueError(f"mode {w.tolist()} outside the dual window of n={grid.n}")
    return float(-4.0 * np.sum(np.sin(np.pi * w / grid.n) ** 2))


def dft_forward(grid: TorusGrid, v: SiteField) -> SiteField:
    """vhat(w) = n^-d sum_x v(x) exp(-2 pi i x.w/n)."""
    return SiteField(grid, np.fft.fftn(v.values) / grid.n_sites)


def dft_inverse(grid: TorusGrid, vhat: SiteField) -> SiteField:
    """Inverse of :func:`dft_forward`; reconstructs v exactly up to round-off."""
    return SiteField(grid, np.fft.ifftn(vhat.values) * grid.n_sites)


def poisson_solve(grid: TorusGrid, rhs: SiteField) -> SiteField:
    """Solve Dv = rhs on the torus in the mean-zero gauge.

    The right-hand side must sum to zero (within 1e-9 * n^d * max|rhs|);
    otherwise no solution exists and the input is rejected, which downstream
    signals a mass-conservation bug rather than a numerical issue.
    """
    a = np.asarray(rhs.values, dtype=float)
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    if scale == 0.0:
        return SiteField.zeros(grid)
    total = float(a.sum())
    if abs(total) > 1e-9 * grid.n_sites * scale:
        raise NonConservedMassError(
            f"rhs sums to {total:.3e}, not zero (scale {scale:.3e})"
        )
    lam = laplacian_eigenvalues(grid)
    rhat = np.fft.fftn(a)
    vhat = np.zeros_like(rhat)
    nonzero = lam != 0.0
    vhat[nonzero] = rhat[nonzero] / lam[nonzero]
    v = np.fft.ifftn(vhat).real
    return SiteField(grid, v)


# ---------------------------------------------------------------------------
# Snapshot format: one JSON header line, then raw little-endian float64.

def dump_site_field(field: SiteField, path) -> None:
    if np.iscomplexobj(field.values):
        raise ValueError("snapshot format stores real fields only")
    header = {
        "d": field.grid.d,
        "n": field.grid.n,
        "dtype": "f64",
        "order": "row-major, axis 0 slowest",
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def load_site_field(path) -> SiteField:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        grid = TorusGrid(int(header["d"]), int(header["n"]))
        raw = fh.read(8 * grid.n_sites)
    values = np.frombuffer(raw, dtype="<f8").reshape(grid.shape).copy()
    return SiteField(grid, values)
