"""Grids, complex axial fields, and the differential/integral operators.

Two kinds of grids appear throughout:

* the lab frame: a half-plane (r, z) in [0, r_max] x [-z_half, z_half] with
  the axis row r = 0 present, carrying the cylindrical measure r dr dz and
  the axial Laplacian  d_rr + d_zz + (1/r) d_r;
* the rescaled frame: a square (rt, zt) plane centered at the ring, carrying
  the plain 2D measure and the flat Laplacian.

All integrals are trapezoid sums, all stencils second-order centered.  The
singular 1/r term is replaced by its L'Hopital limit on the axis row, which
turns the axial Laplacian into 2 d_rr + d_zz there (even extension in r).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline


class GridError(ValueError):
    """Invalid grid geometry."""


class ShapeError(ValueError):
    """Fields on mismatched grids."""


class FrameOverflowError(ValueError):
    """Mapped points fall outside the lab domain."""

    def __init__(self, msg, overflow):
        super().__init__(msg)
        self.overflow = overflow   # worst excess distance beyond the domain


@dataclass(frozen=True)
class Grid2D:
    """Uniform lab grid on [0, r_max] x [-z_half_width, z_half_width]."""

    n_r: int
    n_z: int
    dr: float
    dz: float
    r_max: float
    z_half_width: float

    def __post_init__(self):
        if self.n_r < 4 or self.n_z < 4:
            raise GridError(f"grid too small: n_r={self.n_r}, n_z={self.n_z} (need >= 4)")
        if self.dr <= 0 or self.dz <= 0:
            raise GridError("grid spacing must be positive")
        if abs(self.dr * (self.n_r - 1) - self.r_max) > 1e-12 * max(1.0, self.r_max):
            raise GridError("dr*(n_r-1) != r_max")
        if abs(self.dz * (self.n_z - 1) - 2 * self.z_half_width) > 1e-12 * max(1.0, self.z_half_width):
            raise GridError("dz*(n_z-1) != 2*z_half_width")

    @classmethod
    def make(cls, n_r, n_z, r_max, z_half_width):
        return cls(n_r=n_r, n_z=n_z, dr=r_max / (n_r - 1),
                   dz=2 * z_half_width / (n_z - 1),
                   r_max=r_max, z_half_width=z_half_width)

    @property
    def r(self):
        return self.dr * np.arange(self.n_r)

    @property
    def z(self):
        return -self.z_half_width + self.dz * np.arange(self.n_z)

    def mesh(self):
        return np.meshgrid(self.r, self.z, indexing="ij")

    def trapz_weights(self):
        """Separable trapezoid weights (without the r factor)."""
        wr = np.ones(self.n_r); wr[0] = wr[-1] = 0.5
        wz = np.ones(self.n_z); wz[0] = wz[-1] = 0.5
        return wr * self.dr, wz * self.dz


@dataclass
class AxialField:
    """Complex samples u(r, z) on a lab grid at lab time t."""

    grid: Grid2D
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.n_r, self.grid.n_z):
            raise ShapeError(f"values shape {self.values.shape} != grid "
                             f"({self.grid.n_r}, {self.grid.n_z})")

    def copy(self):
        return AxialField(self.grid, self.values.copy(), self.time)


@dataclass(frozen=True)
class LocalFrame:
    """Modulation frame (scale, ring center, phase); mu(rt) = lam*rt + r_c."""

    lam: float
    r_c: float
    z_c: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")

    def mu(self, rt):
        """Jacobian weight, clamped to 0 where lam*rt + r_c < 0."""
        return np.maximum(self.lam * np.asarray(rt) + self.r_c, 0.0)

    def inverse(self):
        return LocalFrame(lam=1.0 / self.lam, r_c=-self.r_c / self.lam,
                          z_c=-self.z_c / self.lam, gamma=-self.gamma)


@dataclass(frozen=True)
class RescaledGrid2D:
    """Square grid symmetric about (rt, zt) = (0, 0), uniform spacing."""

    n_rt: int
    n_zt: int
    spacing: float
    extent: float

    def __post_init__(self):
        if self.spacing <= 0:
            raise GridError("spacing must be positive")
        if self.n_rt % 2 == 0 or self.n_zt % 2 == 0:
            raise GridError("odd point counts required so the origin is a node")

    @classmethod
    def make(cls, extent, spacing):
        half = int(round(extent / spacing))
        n = 2 * half + 1
        return cls(n_rt=n, n_zt=n, spacing=spacing, extent=half * spacing)

    @property
    def rt(self):
        half = (self.n_rt - 1) // 2
        return self.spacing * (np.arange(self.n_rt) - half)

    @property
    def zt(self):
        half = (self.n_zt - 1) // 2
        return self.spacing * (np.arange(self.n_zt) - half)

    def mesh(self):
        return np.meshgrid(self.rt, self.zt, indexing="ij")

    def radius(self):
        RT, ZT = self.mesh()
        return np.hypot(RT, ZT)


# ---------------------------------------------------------------------------
# lab-frame operators

def axial_laplacian(u: AxialField) -> AxialField:
    """d_rr + d_zz + (1/r) d_r with the L'Hopital axis row 2 d_rr + d_zz.

    Neumann at the axis (ghost row mirror), homogeneous Dirichlet on the
    other three sides.
    """
    g = u.grid
    v = u.values
    dr2, dz2 = g.dr ** 2, g.dz ** 2
    out = np.zeros_like(v)

    # zz part everywhere (Dirichlet ghosts are zero)
    out[:, 1:-1] += (v[:, 2:] - 2 * v[:, 1:-1] + v[:, :-2]) / dz2
    out[:, 0] += (v[:, 1] - 2 * v[:, 0]) / dz2
    out[:, -1] += (v[:, -2] - 2 * v[:, -1]) / dz2

    # radial part, interior rows
    r = g.r[1:-1, None]
    out[1:-1, :] += (v[2:, :] - 2 * v[1:-1, :] + v[:-2, :]) / dr2
    out[1:-1, :] += (v[2:, :] - v[:-2, :]) / (2 * r * g.dr)
    # outer Dirichlet row
    out[-1, :] += (-2 * v[-1, :] + v[-2, :]) / dr2
    out[-1, :] += (-v[-2, :]) / (2 * g.r[-1] * g.dr)
    # axis row: even mirror gives d_rr = 2(v1 - v0)/dr^2, times 2 for L'Hopital
    out[0, :] += 4 * (v[1, :] - v[0, :]) / dr2

    return AxialField(g, out, u.time)


def gradient_rz(values, dr, dz):
    """Centered (d_r, d_z), one-sided second order at the edges."""
    gr = np.gradient(values, dr, axis=0)
    gz = np.gradient(values, dz, axis=1)
    return gr, gz


def integrate_lab(values, grid: Grid2D):
    """Trapezoid integral of `values` against r dr dz."""
    wr, wz = grid.trapz_weights()
    return float(np.real(np.einsum("i,j,ij->", wr * grid.r, wz, np.real(values))))


def lab_norm_sq(u: AxialField):
    return integrate_lab(np.abs(u.values) ** 2, u.grid)


# ---------------------------------------------------------------------------
# rescaled-frame operators

def flat_laplacian(values, spacing):
    """Plain 2D five-point Laplacian, zero Dirichlet ghosts."""
    h2 = spacing ** 2
    out = -4.0 * values.astype(values.dtype, copy=True)
    out[1:, :] += values[:-1, :]
    out[:-1, :] += values[1:, :]
    out[:, 1:] += values[:, :-1]
    out[:, :-1] += values[:, 1:]
    return out / h2


def apply_scaling_generator(values, grid: RescaledGrid2D):
    """Lambda f = f + rt d_rt f + zt d_zt f with centered differences."""
    values = np.asarray(values)
    if values.shape != (grid.n_rt, grid.n_zt):
        raise ShapeError("field shape does not match the rescaled grid")
    fr = np.gradient(values, grid.spacing, axis=0)
    fz = np.gradient(values, grid.spacing, axis=1)
    RT, ZT = grid.mesh()
    return values + RT * fr + ZT * fz


def integrate_plane(values, grid: RescaledGrid2D):
    """Trapezoid integral against drt dzt."""
    w_r = np.ones(grid.n_rt); w_r[0] = w_r[-1] = 0.5
    w_z = np.ones(grid.n_zt); w_z[0] = w_z[-1] = 0.5
    return float(np.einsum("i,j,ij->", w_r, w_z, np.real(values)) * grid.spacing ** 2)


def plain_inner(f, g, grid: RescaledGrid2D):
    """2d real inner product (f, g) = int Re(f conj(g)) drt dzt."""
    if np.shape(f) != (grid.n_rt, grid.n_zt) or np.shape(g) != (grid.n_rt, grid.n_zt):
        raise ShapeError("inner product operands must live on the given grid")
    return integrate_plane(np.real(np.conj(np.asarray(g)) * np.asarray(f)), grid)


def weighted_inner(f, g, frame: LocalFrame, grid: RescaledGrid2D):
    """int Re(f conj(g)) mu(rt) drt dzt with mu clamped at zero."""
    if np.shape(f) != (grid.n_rt, grid.n_zt) or np.shape(g) != (grid.n_rt, grid.n_zt):
        raise ShapeError("inner product operands must live on the given grid")
    mu = frame.mu(grid.rt)[:, None]
    return integrate_plane(np.real(np.conj(np.asarray(g)) * np.asarray(f)) * mu, grid)


# ---------------------------------------------------------------------------
# frame changes

def _bicubic(values, r_coords, z_coords):
    """Bicubic interpolants of the real/imag parts, even-extended across r=0."""
    if r_coords[0] == 0.0:
        # axial symmetry: u(-r, z) = u(r, z)
        r_ext = np.concatenate([-r_coords[:0:-1], r_coords])
        v_ext = np.concatenate([values[:0:-1, :], values], axis=0)
    else:
        r_ext, v_ext = r_coords, values
    sp_re = RectBivariateSpline(r_ext, z_coords, v_ext.real, kx=3, ky=3)
    sp_im = RectBivariateSpline(r_ext, z_coords, v_ext.imag, kx=3, ky=3)
    return sp_re, sp_im, r_ext[0], r_ext[-1]


def resample_between_frames(u: AxialField, frame: LocalFrame,
                            target: RescaledGrid2D) -> np.ndarray:
    """Map u to the rescaled frame: lam * u(lam rt + r_c, lam zt + z_c) e^{-i gamma}.

    Bicubic in both directions; u is extended evenly across the axis.  The
    inverse map is this operation with `frame.inverse()` applied to a field
    living on the rescaled grid (see `resample_values`).
    """
    g = u.grid
    return resample_values(u.values, g.r, g.z, frame, target.rt, target.zt)


def resample_values(values, r_coords, z_coords, frame: LocalFrame,
                    target_r, target_z) -> np.ndarray:
    """Generic frame resampling of complex samples on a rectilinear grid."""
    sp_re, sp_im, r_lo, r_hi = _bicubic(np.asarray(values, dtype=complex),
                                        np.asarray(r_coords, dtype=float),
                                        np.asarray(z_coords, dtype=float))
    rp = frame.lam * np.asarray(target_r) + frame.r_c
    zp = frame.lam * np.asarray(target_z) + frame.z_c
    over_r = max(r_lo - rp.min(), rp.max() - r_hi, 0.0)
    over_z = max(z_coords[0] - zp.min(), zp.max() - z_coords[-1], 0.0)
    if over_r > 1e-12 or over_z > 1e-12:
        raise FrameOverflowError(
            f"frame maps outside the source domain by ({over_r:.3g}, {over_z:.3g})",
            overflow=max(over_r, over_z))
    vals = sp_re(rp, zp) + 1j * sp_im(rp, zp)
    return frame.lam * np.exp(-1j * frame.gamma) * vals
