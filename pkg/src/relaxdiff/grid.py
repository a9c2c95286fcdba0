"""Discrete differential operators on the pixel grid.

Fields are cell-centered numpy arrays of shape dims + (k,). The discrete
gradient takes forward differences along each axis; the value for the face
between cells x and x+e_j is stored at slot (x, :, j), and the last slot per
axis (which has no forward face) holds zero. The divergence is built as the
exact negative adjoint of this gradient under the plain grid inner products,
with zero flux through all boundary faces. That pairing is what the no-flux
boundary treatment means discretely: summation by parts holds to rounding,
so total intensity is conserved and the diffusion operator below is an
exactly symmetric, coercive map.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericalError, ParameterError
from .tensors import SYMMETRY_RTOL

Array = np.ndarray


@dataclass(frozen=True)
class GridSpec:
    """Pixel grid: sizes per axis, spacing per axis, channel count."""

    dims: tuple[int, ...]
    spacing: tuple[float, ...] = ()
    channels: int = 1

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if len(dims) == 0:
            raise ParameterError("grid needs at least one axis")
        if any(n < 2 for n in dims):
            raise ParameterError(f"all grid dims must be >= 2, got {dims}")
        spacing = self.spacing or tuple(1.0 for _ in dims)
        spacing = tuple(float(h) for h in spacing)
        if len(spacing) != len(dims):
            raise ParameterError("spacing must have one entry per axis")
        if any(h <= 0 for h in spacing):
            raise ParameterError(f"spacing must be positive, got {spacing}")
        if self.channels < 1:
            raise ParameterError("channels must be >= 1")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "channels", int(self.channels))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def ncells(self) -> int:
        return int(np.prod(self.dims))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def field_shape(self) -> tuple[int, ...]:
        return self.dims + (self.channels,)

    @staticmethod
    def from_field(u: Array, spacing: tuple[float, ...] = ()) -> "GridSpec":
        """Grid implied by a dims + (k,) array (unit spacing by default)."""
        u = np.asarray(u)
        if u.ndim < 2:
            raise DimensionError("image field needs shape dims + (channels,)")
        return GridSpec(dims=u.shape[:-1], spacing=spacing, channels=u.shape[-1])


def check_image(u: Array, grid: GridSpec) -> Array:
    u = np.asarray(u, dtype=float)
    if u.shape != grid.field_shape():
        raise DimensionError(f"field shape {u.shape} != grid shape {grid.field_shape()}")
    return u


def _axis_slices(ndim: int, axis: int):
    """(cells with a forward face, their forward neighbors, last cells)."""
    lo = [slice(None)] * ndim
    hi = [slice(None)] * ndim
    last = [slice(None)] * ndim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    last[axis] = slice(-1, None)
    return tuple(lo), tuple(hi), tuple(last)


def gradient(u: Array, grid: GridSpec) -> Array:
    """Forward-difference gradient field of shape dims + (k, d)."""
    u = check_image(u, grid)
    d = grid.ndim
    out = np.zeros(grid.dims + (grid.channels, d))
    for j in range(d):
        lo, hi, _ = _axis_slices(d, j)
        out[lo + (slice(None), j)] = (u[hi] - u[lo]) / grid.spacing[j]
    return out


def divergence(jfield: Array, grid: GridSpec) -> Array:
    """Negative adjoint of ``gradient``; boundary faces carry zero flux.

    The padding slot of each axis (last cell) is ignored, which realises the
    vanishing normal flux: sum over all cells of the output is exactly zero.
    """
    jfield = np.asarray(jfield, dtype=float)
    d = grid.ndim
    if jfield.shape != grid.dims + (grid.channels, d):
        raise DimensionError(
            f"flux shape {jfield.shape} != {grid.dims + (grid.channels, d)}"
        )
    out = np.zeros(grid.field_shape())
    for j in range(d):
        lo, hi, _ = _axis_slices(d, j)
        f = jfield[..., j][lo]  # interior faces only; boundary flux is zero
        h = grid.spacing[j]
        out[lo] += f / h
        out[hi] -= f / h
    return out


def face_average_tensors(hfield: Array, grid: GridSpec) -> Array:
    """One tensor per cell slot, averaged from the tensors at its forward faces.

    Each forward face between x and x+e_j carries the arithmetic mean of the
    two adjacent cell tensors; the slot tensor is the mean over the cell's
    existing forward faces (the far corner keeps its own tensor). Being a
    convex combination of cell tensors, the result stays symmetric and keeps
    any shared eigenvalue floor, which makes the diffusion form below
    exactly symmetric and coercive.
    """
    hfield = np.asarray(hfield, dtype=float)
    d = grid.ndim
    out = np.zeros_like(hfield)
    count = np.zeros(grid.dims)
    for j in range(d):
        lo, hi, _ = _axis_slices(d, j)
        out[lo] += 0.5 * (hfield[lo] + hfield[hi])
        count[lo] += 1.0
    corner = count == 0
    count[corner] = 1.0
    out /= count[..., None, None]
    if np.any(corner):
        out[corner] = hfield[corner]
    return out


def _check_field_symmetry(hfield: Array) -> None:
    scale = max(1.0, float(np.max(np.abs(hfield)))) if hfield.size else 1.0
    asym = float(np.max(np.abs(hfield - np.swapaxes(hfield, -1, -2))))
    if asym > SYMMETRY_RTOL * scale:
        from .errors import SymmetryError

        raise SymmetryError("tensor field is not symmetric within tolerance")


def diffusion_apply(hfield: Array, u: Array, grid: GridSpec, *, check: bool = True) -> Array:
    """div(H grad u) with face-averaged tensors; linear and mass conserving."""
    if check:
        _check_field_symmetry(np.asarray(hfield, dtype=float))
    havg = face_average_tensors(hfield, grid)
    return _diffusion_apply_pre(havg, u, grid)


def _diffusion_apply_pre(havg: Array, u: Array, grid: GridSpec) -> Array:
    """Same as diffusion_apply but with face-averaged tensors precomputed."""
    g = gradient(u, grid)
    kd = grid.channels * grid.ndim
    flat = g.reshape(grid.dims + (kd,))
    j = np.einsum("...ab,...b->...a", havg, flat).reshape(g.shape)
    return divergence(j, grid)


def inner(u: Array, v: Array, grid: GridSpec) -> float:
    """Volume-weighted grid inner product of two fields of equal shape."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DimensionError(f"shape mismatch: {u.shape} vs {v.shape}")
    return grid.cell_volume * float(np.dot(u.ravel(), v.ravel()))


def l2_norm(u: Array, grid: GridSpec) -> float:
    return float(np.sqrt(max(inner(u, u, grid), 0.0)))


def channel_means(u: Array, grid: GridSpec) -> Array:
    u = check_image(u, grid)
    return u.reshape(-1, grid.channels).mean(axis=0)


def mean_free(u: Array, grid: GridSpec) -> Array:
    """Remove the per-channel spatial mean (the conserved part)."""
    return check_image(u, grid) - channel_means(u, grid)


def neumann_laplacian(u: Array, grid: GridSpec) -> Array:
    """-div(grad u), the scalar-diffusivity special case, channel-wise."""
    return -divergence(gradient(u, grid), grid)


def _cg_scalar(apply_op, b: Array, tol: float, max_iter: int) -> Array:
    """Plain CG for the SPD scalar Laplacian restricted to mean-free fields."""
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = float(np.dot(r.ravel(), r.ravel()))
    b_nrm = np.sqrt(float(np.dot(b.ravel(), b.ravel())))
    if b_nrm == 0.0:
        return x
    for _ in range(max_iter):
        ap = apply_op(p)
        alpha = rs / float(np.dot(p.ravel(), ap.ravel()))
        x += alpha * p
        r -= alpha * ap
        rs_new = float(np.dot(r.ravel(), r.ravel()))
        if np.sqrt(rs_new) <= tol * b_nrm:
            x -= x.mean()  # roundoff hygiene: stay in the mean-free subspace
            return x
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise NumericalError("inner CG for the Poincare estimate did not converge")


def poincare_estimate(grid: GridSpec, tol: float = 1e-10, max_iter: int = 500) -> float:
    """Smallest nonzero eigenvalue of the scalar no-flux Laplacian on the grid.

    Computed by inverse iteration restricted to the mean-free subspace (the
    kernel of the operator is spanned by constants). This is the discrete
    constant in ||grad u||^2 >= C ||u||^2 for mean-free u, used by the
    decay-rate predictions.
    """
    scalar = GridSpec(dims=grid.dims, spacing=grid.spacing, channels=1)

    def lap(v: Array) -> Array:
        return neumann_laplacian(v, scalar)

    rng = np.random.default_rng(12345)
    v = rng.standard_normal(scalar.field_shape())
    v -= v.mean()
    v /= np.linalg.norm(v.ravel())

    lam_prev = np.inf
    cg_iters = 8 * scalar.ncells  # CG is exact in ncells steps; generous cap
    for _ in range(max_iter):
        w = _cg_scalar(lap, v, tol=1e-13, max_iter=cg_iters)
        w -= w.mean()
        w /= np.linalg.norm(w.ravel())
        lam = float(np.dot(w.ravel(), lap(w).ravel()))
        if abs(lam - lam_prev) <= tol * max(abs(lam), 1e-300):
            return lam
        lam_prev = lam
        v = w
    raise NumericalError("inverse iteration for the Poincare estimate did not converge")
