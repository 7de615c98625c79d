"""Fourier pseudo-spectral core for periodic 2D fields.

Fields live on the square torus [0, L)^2, sampled on an n x n uniform
grid.  A scalar field is represented by the half-spectrum rFFT
coefficients c[kx, ky] (kx runs over the full signed lattice, ky >= 0)
normalized so that

    f(x) = sum_k c_k exp(i k . x),          k = (2 pi / L) * integer pair,

which makes the coefficients coincide with the analytic Fourier series
of the field.  Real-valuedness is structural: the missing half of the
spectrum is implied by Hermitian symmetry.

Nonlinear terms follow the 2/3 rule: inputs are truncated to the square
band |k|_inf <= (n-1)//3 (in integer wavenumbers), products are formed on
the same grid, and the result is truncated back to the band, so the
retained modes of a product are exactly the true convolution.  The
advection operation uses the skew-symmetric average

    advect(a, w) = 1/2 [ (a . grad) w + div(a (x) w) ],

whose discrete energy pairing (advect(a, w), w) vanishes to roundoff by
construction.  A divergence-form shortcut is provided for solver inner
loops where the advecting field is exactly divergence-free; the two
paths agree to machine precision and a test pins that down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft as sfft

TWO_PI = 2.0 * math.pi

# Sharpness of the 2D Ladyzhenskaya inequality ||w||_L4 <= C ||w||^(1/2) ||grad w||^(1/2).
LADYZHENSKAYA_CONST = 2.0 ** 0.25


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TorusGrid:
    """Uniform n x n grid on [0, length)^2 with its spectral machinery.

    Arrays of grid values are indexed [ix, iy]; coefficient arrays are
    indexed [kx, ky] with kx in fftfreq order and ky = 0..n//2.
    """

    n: int
    length: float = TWO_PI

    def __post_init__(self):
        if self.n < 4 or self.n % 2:
            raise ValueError(f"grid size must be even and >= 4, got n={self.n}")
        if not self.length > 0:
            raise ValueError("domain length must be positive")

    # -- lattice ---------------------------------------------------------

    @cached_property
    def x(self) -> np.ndarray:
        """1D node coordinates, shared by both axes."""
        return _readonly(np.arange(self.n) * (self.length / self.n))

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        X, Y = np.meshgrid(self.x, self.x, indexing="ij")
        return _readonly(X), _readonly(Y)

    @cached_property
    def kx_int(self) -> np.ndarray:
        """Signed integer wavenumbers along axis 0, fftfreq order."""
        return _readonly(np.fft.fftfreq(self.n, 1.0 / self.n).astype(np.int64))

    @cached_property
    def ky_int(self) -> np.ndarray:
        """Nonnegative integer wavenumbers along axis 1 (rFFT half)."""
        return _readonly(np.arange(self.n // 2 + 1, dtype=np.int64))

    @cached_property
    def kx(self) -> np.ndarray:
        """Physical wavenumbers along axis 0, broadcast shape (n, 1)."""
        return _readonly((TWO_PI / self.length) * self.kx_int[:, None].astype(float))

    @cached_property
    def ky(self) -> np.ndarray:
        """Physical wavenumbers along axis 1, broadcast shape (1, n//2+1)."""
        return _readonly((TWO_PI / self.length) * self.ky_int[None, :].astype(float))

    @cached_property
    def k2(self) -> np.ndarray:
        return _readonly(self.kx**2 + self.ky**2)

    @cached_property
    def inv_k2(self) -> np.ndarray:
        """1/|k|^2 with the k=0 entry set to zero (zero-mean convention)."""
        k2 = self.k2.copy()
        k2[0, 0] = 1.0
        out = 1.0 / k2
        out[0, 0] = 0.0
        return _readonly(out)

    @cached_property
    def dealias_cutoff(self) -> int:
        # Largest K with 3K < n: products of band-limited fields then
        # carry no aliasing back into the retained band.
        return (self.n - 1) // 3

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        kd = self.dealias_cutoff
        m = (np.abs(self.kx_int)[:, None] <= kd) & (self.ky_int[None, :] <= kd)
        return _readonly(m)

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on modes to keep (Nyquist rows/columns excluded)."""
        m = (self.kx_int != -self.n // 2)[:, None] & (self.ky_int != self.n // 2)[None, :]
        return _readonly(m)

    @cached_property
    def hermitian_weights(self) -> np.ndarray:
        """Multiplicity of each stored mode in the full spectrum."""
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = 1.0
        if self.n % 2 == 0:
            w[-1] = 1.0
        return _readonly(np.broadcast_to(w[None, :], self.coeff_shape).copy())

    @property
    def coeff_shape(self) -> tuple[int, int]:
        return (self.n, self.n // 2 + 1)

    @property
    def cell_area(self) -> float:
        return (self.length / self.n) ** 2

    # -- transforms ------------------------------------------------------

    def to_coeffs(self, values: np.ndarray) -> np.ndarray:
        """Grid values -> normalized half-spectrum coefficients."""
        return sfft.rfft2(np.asarray(values, dtype=float), axes=(-2, -1)) / self.n**2

    def to_values(self, coeffs: np.ndarray) -> np.ndarray:
        """Normalized half-spectrum coefficients -> grid values."""
        return sfft.irfft2(coeffs * self.n**2, axes=(-2, -1), s=(self.n, self.n))


@lru_cache(maxsize=None)
def _grid_instance(n: int, length: float) -> TorusGrid:
    return TorusGrid(n, length)


def get_grid(n: int, length: float = TWO_PI) -> TorusGrid:
    """Shared per-(n, length) grid instances (read-mostly registry)."""
    # normalize before caching so get_grid(n) and get_grid(n, TWO_PI) alias
    return _grid_instance(int(n), float(length))


def _symmetrize_edges(grid: TorusGrid, c: np.ndarray) -> np.ndarray:
    """Enforce the Hermitian constraint internal to the ky=0 / ky=n/2 columns."""
    c = np.array(c, dtype=complex, copy=True)
    for j in (0, grid.n // 2):
        col = c[..., :, j]
        flipped = np.conj(np.roll(col[..., ::-1], 1, axis=-1))
        c[..., :, j] = 0.5 * (col + flipped)
    return c


# ---------------------------------------------------------------------------
# field containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarField:
    """Real scalar field on a TorusGrid, stored spectrally."""

    grid: TorusGrid
    coeffs: np.ndarray
    time: float = 0.0

    @classmethod
    def from_grid(cls, grid: TorusGrid, values: np.ndarray, time: float = 0.0) -> "ScalarField":
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.n, grid.n):
            raise ValueError(f"expected values of shape {(grid.n, grid.n)}, got {values.shape}")
        f = cls(grid, _readonly(grid.to_coeffs(values)), time)
        f.__dict__["values"] = _readonly(values.copy())
        return f

    @classmethod
    def from_coeffs(cls, grid: TorusGrid, coeffs: np.ndarray, time: float = 0.0) -> "ScalarField":
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != grid.coeff_shape:
            raise ValueError(f"expected coeffs of shape {grid.coeff_shape}, got {coeffs.shape}")
        return cls(grid, _readonly(_symmetrize_edges(grid, coeffs)), time)

    @cached_property
    def values(self) -> np.ndarray:
        return _readonly(self.grid.to_values(self.coeffs))

    def __add__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.grid, _readonly(self.coeffs + other.coeffs), self.time)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.grid, _readonly(self.coeffs - other.coeffs), self.time)

    def __mul__(self, s: float) -> "ScalarField":
        return ScalarField(self.grid, _readonly(self.coeffs * s), self.time)

    __rmul__ = __mul__

    def mean(self) -> float:
        return float(self.coeffs[0, 0].real)


@dataclass(frozen=True)
class SpectralVectorField:
    """Real 2-component vector field on a TorusGrid, stored spectrally.

    Dynamical states are kept zero-mean and (for velocities) divergence
    free; both are invariants of the evolution operators rather than of
    the container, and diagnostics below let tests assert them.
    """

    grid: TorusGrid
    coeffs: np.ndarray  # shape (2, n, n//2+1)
    time: float = 0.0

    @classmethod
    def from_grid(cls, grid: TorusGrid, values: np.ndarray, time: float = 0.0) -> "SpectralVectorField":
        values = np.asarray(values, dtype=float)
        if values.shape != (2, grid.n, grid.n):
            raise ValueError(f"expected values of shape {(2, grid.n, grid.n)}, got {values.shape}")
        f = cls(grid, _readonly(grid.to_coeffs(values)), time)
        f.__dict__["values"] = _readonly(values.copy())
        return f

    @classmethod
    def from_coeffs(cls, grid: TorusGrid, coeffs: np.ndarray, time: float = 0.0) -> "SpectralVectorField":
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (2,) + grid.coeff_shape:
            raise ValueError(f"expected coeffs of shape {(2,) + grid.coeff_shape}, got {coeffs.shape}")
        return cls(grid, _readonly(_symmetrize_edges(grid, coeffs)), time)

    @classmethod
    def zero(cls, grid: TorusGrid, time: float = 0.0) -> "SpectralVectorField":
        return cls(grid, _readonly(np.zeros((2,) + grid.coeff_shape, dtype=complex)), time)

    @cached_property
    def values(self) -> np.ndarray:
        return _readonly(self.grid.to_values(self.coeffs))

    @property
    def u1(self) -> ScalarField:
        return ScalarField(self.grid, _readonly(self.coeffs[0]), self.time)

    @property
    def u2(self) -> ScalarField:
        return ScalarField(self.grid, _readonly(self.coeffs[1]), self.time)

    def __add__(self, other: "SpectralVectorField") -> "SpectralVectorField":
        return SpectralVectorField(self.grid, _readonly(self.coeffs + other.coeffs), self.time)

    def __sub__(self, other: "SpectralVectorField") -> "SpectralVectorField":
        return SpectralVectorField(self.grid, _readonly(self.coeffs - other.coeffs), self.time)

    def __mul__(self, s: float) -> "SpectralVectorField":
        return SpectralVectorField(self.grid, _readonly(self.coeffs * s), self.time)

    __rmul__ = __mul__

    def at_time(self, t: float) -> "SpectralVectorField":
        return SpectralVectorField(self.grid, self.coeffs, t)

    def mean(self) -> np.ndarray:
        return self.coeffs[:, 0, 0].real.copy()

    def max_divergence(self) -> float:
        """L2 norm of div(self); zero to roundoff for solenoidal fields."""
        return l2_norm(divergence(self))


Field = ScalarField | SpectralVectorField


def hermitian_defect(f: Field) -> float:
    """Max deviation of the stored coefficients from real-field symmetry.

    The rFFT layout makes most of the constraint structural; only the
    ky = 0 and ky = n/2 columns can drift, so that is what is measured.
    """
    grid = f.grid
    c = f.coeffs.reshape(-1, *grid.coeff_shape)
    worst = 0.0
    for j in (0, grid.n // 2):
        col = c[..., :, j]
        flipped = np.conj(np.roll(col[..., ::-1], 1, axis=-1))
        worst = max(worst, float(np.max(np.abs(col - flipped))))
    return worst


# ---------------------------------------------------------------------------
# calculus
# ---------------------------------------------------------------------------


def gradient(f: ScalarField) -> SpectralVectorField:
    g = f.grid
    c = np.stack([1j * g.kx * f.coeffs, 1j * g.ky * f.coeffs])
    return SpectralVectorField(g, _readonly(c), f.time)


def divergence(v: SpectralVectorField) -> ScalarField:
    g = v.grid
    c = 1j * g.kx * v.coeffs[0] + 1j * g.ky * v.coeffs[1]
    return ScalarField(g, _readonly(c), v.time)


def curl(v: SpectralVectorField) -> ScalarField:
    """Scalar vorticity d(u2)/dx - d(u1)/dy."""
    g = v.grid
    c = 1j * g.kx * v.coeffs[1] - 1j * g.ky * v.coeffs[0]
    return ScalarField(g, _readonly(c), v.time)


def laplacian(f: Field) -> Field:
    g = f.grid
    c = -g.k2 * f.coeffs
    if isinstance(f, ScalarField):
        return ScalarField(g, _readonly(c), f.time)
    return SpectralVectorField(g, _readonly(c), f.time)


def leray_project(v: SpectralVectorField) -> SpectralVectorField:
    """L2-orthogonal projection onto divergence-free fields.

    Mode-wise P = I - k k^T / |k|^2; the k = 0 (mean) mode is untouched,
    since constants are divergence free.
    """
    return SpectralVectorField(v.grid, _readonly(_leray_coeffs(v.grid, v.coeffs)), v.time)


def _leray_coeffs(grid: TorusGrid, c: np.ndarray) -> np.ndarray:
    kdotc = grid.kx * c[0] + grid.ky * c[1]
    scale = kdotc * grid.inv_k2
    return np.stack([c[0] - grid.kx * scale, c[1] - grid.ky * scale])


def dealias(f: Field) -> Field:
    g = f.grid
    c = f.coeffs * g.dealias_mask
    if isinstance(f, ScalarField):
        return ScalarField(g, _readonly(c), f.time)
    return SpectralVectorField(g, _readonly(c), f.time)


# ---------------------------------------------------------------------------
# advection
# ---------------------------------------------------------------------------


def advect(a: SpectralVectorField, w: SpectralVectorField) -> SpectralVectorField:
    """Skew-symmetric advection 1/2 [ (a . grad) w + div(a (x) w) ].

    Both inputs are truncated to the 2/3 band before the products are
    formed, and the output is truncated back, so retained modes carry
    the exact convolution.  The advecting field `a` is expected to be
    divergence free; that is the caller's contract (it is what makes
    the two bracketed forms coincide), not enforced here.
    """
    g = a.grid
    if w.grid is not g and w.grid != g:
        raise ValueError("advect requires both fields on the same grid")
    ac = a.coeffs * g.dealias_mask
    wc = w.coeffs * g.dealias_mask
    out = _advect_skew_coeffs(g, ac, wc)
    return SpectralVectorField(g, _readonly(out), w.time)


def _advect_skew_coeffs(g: TorusGrid, ac: np.ndarray, wc: np.ndarray) -> np.ndarray:
    """Skew-form advection on raw (already band-limited) coefficients."""
    ikx, iky = 1j * g.kx, 1j * g.ky
    spec = np.concatenate([ac, wc, [ikx * wc[0], iky * wc[0], ikx * wc[1], iky * wc[1]]])
    A1, A2, W1, W2, W1x, W1y, W2x, W2y = g.to_values(spec)
    prods = np.stack(
        [
            A1 * W1x + A2 * W1y,  # (a . grad w)_1
            A1 * W2x + A2 * W2y,  # (a . grad w)_2
            A1 * W1,
            A2 * W1,
            A1 * W2,
            A2 * W2,
        ]
    )
    ph = g.to_coeffs(prods)
    div_form = np.stack([ikx * ph[2] + iky * ph[3], ikx * ph[4] + iky * ph[5]])
    out = 0.5 * (ph[0:2] + div_form)
    return out * g.dealias_mask


def _advect_div_coeffs(g: TorusGrid, a_values: np.ndarray, wc: np.ndarray) -> np.ndarray:
    """Divergence-form advection div(a (x) w) from precomputed grid values of a.

    Solver fast path:  when div a = 0 exactly (band-limited coefficients
    with vanishing divergence) this equals the skew form to roundoff at
    a third of the transforms.  `a_values` must come from band-limited
    coefficients; `wc` is truncated here.
    """
    W1, W2 = g.to_values(wc * g.dealias_mask)
    prods = np.stack([a_values[0] * W1, a_values[1] * W1, a_values[0] * W2, a_values[1] * W2])
    ph = g.to_coeffs(prods)
    ikx, iky = 1j * g.kx, 1j * g.ky
    out = np.stack([ikx * ph[0] + iky * ph[1], ikx * ph[2] + iky * ph[3]])
    return out * g.dealias_mask


# ---------------------------------------------------------------------------
# norms and inner products
# ---------------------------------------------------------------------------


def coeff_dot(grid: TorusGrid, a: np.ndarray, b: np.ndarray) -> float:
    """L2 inner product on raw coefficient arrays (leading axes summed)."""
    s = np.sum(grid.hermitian_weights * (a * np.conj(b)).real)
    return float(grid.length**2 * s)


def inner(f: Field, g: Field) -> float:
    """L2 inner product over the torus (domain measure included)."""
    return coeff_dot(f.grid, f.coeffs, g.coeffs)


def l2_norm(f: Field) -> float:
    return math.sqrt(max(inner(f, f), 0.0))


def h1_seminorm(f: Field) -> float:
    w = f.grid.hermitian_weights * f.grid.k2
    s = np.sum(w * np.abs(f.coeffs) ** 2)
    return float(math.sqrt(f.grid.length**2 * s))


def hminus1_norm(f: Field) -> float:
    """Norm of (-laplace)^(-1/2) f; requires a zero-mean field."""
    c = f.coeffs.reshape(-1, *f.grid.coeff_shape)
    mean = np.max(np.abs(c[:, 0, 0]))
    scale = np.max(np.abs(c)) or 1.0
    if mean > 1e-13 * scale:
        raise ValueError("H^-1 norm is defined here for zero-mean fields only")
    w = f.grid.hermitian_weights * f.grid.inv_k2
    s = np.sum(w * np.abs(f.coeffs) ** 2)
    return float(math.sqrt(f.grid.length**2 * s))


def _lp_norm(f: Field, p: int) -> float:
    v = f.values
    mag2 = v[0] ** 2 + v[1] ** 2 if v.ndim == 3 else v**2
    return float(np.sum(mag2 ** (p / 2)) * f.grid.cell_area) ** (1.0 / p)


def l4_norm(f: Field) -> float:
    """L4 norm by grid quadrature (exact only for band-limited |f|^4)."""
    return _lp_norm(f, 4)


def l6_norm(f: Field) -> float:
    return _lp_norm(f, 6)


@dataclass(frozen=True)
class NormBundle:
    """The norms the stability and error ledgers consume."""

    l2: float
    h1: float
    l4: float
    l6: float
    hminus1: float


def norm_bundle(f: Field) -> NormBundle:
    return NormBundle(
        l2=l2_norm(f),
        h1=h1_seminorm(f),
        l4=l4_norm(f),
        l6=l6_norm(f),
        hminus1=hminus1_norm(f),
    )


def grad_norm_observed(v: SpectralVectorField, mode_mask: np.ndarray) -> float:
    """H1 seminorm restricted to the modes selected by `mode_mask`.

    Used for the ledger term that projects the gradient mode-wise (the
    projection commutes with differentiation on the torus).
    """
    w = v.grid.hermitian_weights * v.grid.k2 * mode_mask
    s = np.sum(w * np.abs(v.coeffs) ** 2)
    return float(math.sqrt(v.grid.length**2 * s))


# ---------------------------------------------------------------------------
# inequality checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LadyzhenskayaReport:
    ratio: float
    bound: float

    @property
    def satisfied(self) -> bool:
        return self.ratio <= self.bound


def check_ladyzhenskaya(w: SpectralVectorField) -> LadyzhenskayaReport:
    """Ratio ||w||_L4 / (||w||^(1/2) ||grad w||^(1/2)) against 2^(1/4).

    The sharp constant holds for compactly supported fields; periodic
    fields localized inside a sub-square probe it with a small
    quadrature slack.  The ratio is scale invariant.
    """
    l2 = l2_norm(w)
    h1 = h1_seminorm(w)
    if l2 == 0.0 or h1 == 0.0:
        raise ValueError("Ladyzhenskaya ratio undefined for constant or zero fields")
    return LadyzhenskayaReport(ratio=l4_norm(w) / math.sqrt(l2 * h1), bound=LADYZHENSKAYA_CONST)


# ---------------------------------------------------------------------------
# field builders (tests, property suites, experiments)
# ---------------------------------------------------------------------------


def random_smooth_scalar(
    grid: TorusGrid,
    rng: np.random.Generator,
    kmax: int | None = None,
    decay: float = 0.5,
    time: float = 0.0,
) -> ScalarField:
    """Zero-mean random scalar with exponentially decaying spectrum."""
    if kmax is None:
        kmax = grid.dealias_cutoff
    shape = grid.coeff_shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    kk = np.maximum(np.abs(grid.kx_int)[:, None], grid.ky_int[None, :])
    c *= np.exp(-decay * kk) * (kk <= kmax)
    c[0, 0] = 0.0
    return ScalarField.from_coeffs(grid, c, time)


def random_divfree_field(
    grid: TorusGrid,
    rng: np.random.Generator,
    kmax: int | None = None,
    decay: float = 0.5,
    normalize: float | None = 1.0,
    time: float = 0.0,
) -> SpectralVectorField:
    """Zero-mean divergence-free random field (curl of a random stream function)."""
    psi = random_smooth_scalar(grid, rng, kmax=kmax, decay=decay)
    g = grid
    c = np.stack([1j * g.ky * psi.coeffs, -1j * g.kx * psi.coeffs])
    v = SpectralVectorField.from_coeffs(grid, c, time)
    if normalize is not None:
        amp = l2_norm(v)
        if amp > 0:
            v = v * (normalize / amp)
    return v


def bump_localized_field(
    grid: TorusGrid,
    rng: np.random.Generator,
    center: tuple[float, float] | None = None,
    radius: float | None = None,
    time: float = 0.0,
) -> SpectralVectorField:
    """Random vector field vanishing identically outside a disk.

    Built as the perpendicular gradient of bump * (smooth random scalar)
    with the bump's derivatives taken analytically, so the grid values
    are exactly zero outside the support and the sampled mean is tiny
    (and removed).  Divergence-free only to discretization accuracy;
    the localized fields exist to probe compact-support inequalities,
    which do not need solenoidality.
    """
    L = grid.length
    if center is None:
        center = (L / 2, L / 2)
    if radius is None:
        radius = L / 4
    X, Y = grid.mesh

    def torus_offset(coord, c0):
        d = coord - c0
        return (d + L / 2) % L - L / 2

    dx = torus_offset(X, center[0])
    dy = torus_offset(Y, center[1])
    rho = (dx**2 + dy**2) / radius**2
    inside = rho < 1.0 - 1e-9
    env = np.zeros_like(rho)
    env[inside] = np.exp(1.0 - 1.0 / (1.0 - rho[inside]))
    denv_drho = np.zeros_like(rho)
    denv_drho[inside] = -env[inside] / (1.0 - rho[inside]) ** 2
    env_x = denv_drho * (2.0 * dx / radius**2)
    env_y = denv_drho * (2.0 * dy / radius**2)

    carrier = random_smooth_scalar(grid, rng, kmax=max(2, grid.n // 8), decay=0.7)
    cv = carrier.values
    cgrad = grid.to_values(np.stack([1j * grid.kx * carrier.coeffs, 1j * grid.ky * carrier.coeffs]))
    phi_x = env_x * cv + env * cgrad[0]
    phi_y = env_y * cv + env * cgrad[1]
    vals = np.stack([phi_y, -phi_x])
    # remove the (tiny) sampled mean without breaking compact support:
    # subtract a multiple of the bump envelope, itself supported in the disk
    for comp in vals:
        comp -= (comp.mean() / env.mean()) * env
    return SpectralVectorField.from_grid(grid, vals, time)


def mode_coefficient(f: ScalarField, kx: int, ky: int) -> complex:
    """Full-spectrum coefficient at integer mode (kx, ky), for tests."""
    n = f.grid.n
    if ky >= 0:
        return complex(f.coeffs[kx % n, ky])
    return complex(np.conj(f.coeffs[(-kx) % n, -ky]))


def single_mode_scalar(grid: TorusGrid, kx: int, ky: int, amplitude: complex = 1.0) -> ScalarField:
    """Real scalar field amplitude * exp(i k.x) + c.c. (2 Re[a e^{ik.x}])."""
    if kx == 0 and ky == 0:
        raise ValueError("use a constant field, not the zero mode")
    c = np.zeros(grid.coeff_shape, dtype=complex)
    if ky < 0:
        kx, ky, amplitude = -kx, -ky, np.conj(amplitude)
    if ky == 0:
        # both members of the conjugate pair live in the stored half
        c[kx % grid.n, 0] = amplitude
        c[(-kx) % grid.n, 0] = np.conj(amplitude)
    else:
        c[kx % grid.n, ky] = amplitude
    return ScalarField.from_coeffs(grid, c)
