"""Numerical checks of the axially symmetric Gagliardo-Nirenberg inequality.

For axially symmetric f and every eps > 0,

    ||f||_{L4(r>eps)}^4  <=  (1/eps) ||f||_{L2(r>eps)}^2 ||grad f||_{L2(r>eps)}^2,

and the interpolation corollary for 1 <= p <= 3,

    ||f||_{L^{p+1}(r>eps)}^{p+1}  <=  2^{p-1} eps^{-(p-1)/2} ||f||^2 ||grad f||^{p-1}.

All norms are in the cylindrical measure r dr dz (the measure in which the
inequality's proof delivers exactly the stated constant); the gradient is
the full (d_r, d_z) gradient, which equals the 3D gradient in magnitude for
axially symmetric functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import AxialField, Grid2D, gradient_rz


@dataclass
class GNCheckResult:
    lhs: float
    rhs: float
    ratio: float
    field_id: str
    truncated_domain: bool = False


def _restricted_norms(f: AxialField, eps_radius):
    g = f.grid
    if eps_radius <= 2 * g.dr:
        raise ValueError("eps_radius must exceed 2*dr")
    r = g.r
    mask = r > eps_radius
    wr, wz = g.trapz_weights()
    wr = wr * r
    wr[~mask] = 0.0
    # boundary node of the restriction gets a half weight
    first = np.argmax(mask)
    wr[first] = 0.5 * wr[first] if first > 0 else wr[first]
    absf = np.abs(f.values)
    gr, gz = gradient_rz(f.values, g.dr, g.dz)
    grad_sq = np.abs(gr) ** 2 + np.abs(gz) ** 2

    def integ(dens):
        return float(np.einsum("i,j,ij->", wr, wz, dens))

    boundary_amp = float(np.abs(f.values[-1, :]).max()
                         + np.abs(f.values[:, 0]).max()
                         + np.abs(f.values[:, -1]).max())
    truncated = boundary_amp > 1e-8
    return absf, integ, grad_sq, truncated


def axial_gn_check(f: AxialField, eps_radius) -> GNCheckResult:
    """Both sides of the exterior L4 inequality in the r dr dz measure."""
    absf, integ, grad_sq, truncated = _restricted_norms(f, eps_radius)
    lhs = integ(absf ** 4)
    rhs = integ(absf ** 2) * integ(grad_sq) / eps_radius
    ratio = lhs / rhs if rhs > 0 else 0.0
    return GNCheckResult(lhs=lhs, rhs=rhs, ratio=ratio,
                         field_id=f"eps={eps_radius}", truncated_domain=truncated)


def interpolation_check(f: AxialField, p, eps_radius) -> GNCheckResult:
    """The L^{p+1} corollary with the stated constant 2^{p-1} eps^{-(p-1)/2}."""
    if not 1.0 <= p <= 3.0:
        raise ValueError("p must lie in [1, 3]")
    absf, integ, grad_sq, truncated = _restricted_norms(f, eps_radius)
    lhs = integ(absf ** (p + 1))
    l2 = integ(absf ** 2)
    gr = integ(grad_sq)
    rhs = 2.0 ** (p - 1) / eps_radius ** ((p - 1) / 2.0) * l2 * gr ** ((p - 1) / 2.0)
    ratio = lhs / rhs if rhs > 0 else 0.0
    return GNCheckResult(lhs=lhs, rhs=rhs, ratio=ratio,
                         field_id=f"p={p},eps={eps_radius}", truncated_domain=truncated)


# ---------------------------------------------------------------------------
# fuzz campaign

def default_gn_grid():
    return Grid2D.make(n_r=129, n_z=193, r_max=8.0, z_half_width=6.0)


def random_axial_field(seed, grid: Grid2D = None) -> AxialField:
    """Seeded band-limited field, compactly supported away from the walls."""
    g = grid if grid is not None else default_gn_grid()
    rng = np.random.default_rng(seed)
    kr = 2 * np.pi * np.fft.fftfreq(g.n_r, d=g.dr)
    kz = 2 * np.pi * np.fft.fftfreq(g.n_z, d=g.dz)
    K2 = kr[:, None] ** 2 + kz[None, :] ** 2
    k0 = rng.uniform(0.8, 2.5)
    c = rng.standard_normal((g.n_r, g.n_z)) + 1j * rng.standard_normal((g.n_r, g.n_z))
    f = np.fft.ifft2(c * np.exp(-K2 / (2 * k0 ** 2)))
    R, Z = g.mesh()
    r0 = rng.uniform(1.0, 5.0)
    z0 = rng.uniform(-2.0, 2.0)
    w = rng.uniform(0.8, 2.0)
    envelope = np.exp(-((R - r0) ** 2 + (Z - z0) ** 2) / (2 * w ** 2))
    # hard zero near the walls so the decay precondition holds
    taper = np.clip((g.r_max - R) / 1.0, 0, 1) * np.clip((g.z_half_width - np.abs(Z)) / 1.0, 0, 1)
    vals = f * envelope * taper ** 2
    peak = np.abs(vals).max()
    if peak > 0:
        vals = vals / peak
    return AxialField(g, vals)


def fuzz_campaign(n_samples, seed, eps_radius=0.5, p_values=(1.5, 2.0, 2.5)):
    """Worst ratio of the L4 inequality and the corollary over seeded fields."""
    grid = default_gn_grid()
    worst = GNCheckResult(lhs=0, rhs=0, ratio=-np.inf, field_id="none")
    for i in range(n_samples):
        f = random_axial_field(seed + i, grid)
        res = axial_gn_check(f, eps_radius)
        res.field_id = f"seed={seed + i},{res.field_id}"
        if res.ratio > worst.ratio:
            worst = res
        for p in p_values:
            res_p = interpolation_check(f, p, eps_radius)
            res_p.field_id = f"seed={seed + i},{res_p.field_id}"
            if res_p.ratio > worst.ratio:
                worst = res_p
    return worst
