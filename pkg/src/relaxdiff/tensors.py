"""Linear algebra for color-gradient matrices and fourth-order diffusivity tensors.

A color gradient is a real k x d matrix (k channels, d spatial axes). A
diffusivity tensor acts linearly on such matrices; with the pair index
(i, j) flattened to i*d + j it is stored as a dense symmetric
(k*d) x (k*d) matrix. k*d stays small (6 for RGB images in 2D), so dense
storage and dense symmetric eigensolvers are the right tool.

All functions here are pure and safe to call concurrently.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDirectionError, DimensionError, SymmetryError

Array = np.ndarray

# Relative tolerance accepted on tensor symmetry before raising.
SYMMETRY_RTOL = 1e-12

# Directions with Frobenius norm below this (times the data scale) cannot
# define a projection.
DEGENERACY_THRESHOLD = 1e-14


@dataclass(frozen=True)
class SpectralBound:
    lambda_min: float
    lambda_max: float


def identity_tensor(k: int, d: int) -> Array:
    """The tensor acting as the identity map on k x d matrices."""
    return np.eye(k * d)


def frobenius(a: Array, b: Array) -> float:
    """Frobenius scalar product sum_ij a_ij b_ij of two equally shaped matrices."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a.ravel(), b.ravel()))


def fro_norm(a: Array) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float).ravel()))


def _check_tensor_shape(h: Array, k: int | None = None, d: int | None = None) -> Array:
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise DimensionError(f"tensor must be square 2-d, got shape {h.shape}")
    if k is not None and d is not None and h.shape[0] != k * d:
        raise DimensionError(f"tensor size {h.shape[0]} does not match k*d = {k * d}")
    return h


def require_symmetric(h: Array, rtol: float = SYMMETRY_RTOL) -> Array:
    """Validate H = H^T up to rtol relative to the entry scale; return H."""
    h = _check_tensor_shape(h)
    scale = max(1.0, float(np.max(np.abs(h)))) if h.size else 1.0
    if float(np.max(np.abs(h - h.T))) > rtol * scale:
        raise SymmetryError("tensor is not symmetric within tolerance")
    return h


def apply(h: Array, dmat: Array) -> Array:
    """Apply a fourth-order tensor to a k x d matrix: (H D)_ij = sum_IJ H_ijIJ D_IJ."""
    dmat = np.asarray(dmat, dtype=float)
    if dmat.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {dmat.shape}")
    k, d = dmat.shape
    h = _check_tensor_shape(h, k, d)
    return (h @ dmat.ravel()).reshape(k, d)


def project_orth(dhat: Array) -> Array:
    """Tensor of the orthogonal projection onto the complement of dhat.

    apply(P, D) = D - (D:dhat) dhat / (dhat:dhat). P is symmetric, idempotent
    and annihilates dhat. A near-zero dhat has no well-defined complement and
    raises DegenerateDirectionError; callers relying on the thresholded
    response never hit this because its smooth branch gives the projection
    term a vanishing coefficient there.
    """
    dhat = np.asarray(dhat, dtype=float)
    if dhat.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {dhat.shape}")
    v = dhat.ravel()
    nrm2 = float(np.dot(v, v))
    scale = max(1.0, float(np.max(np.abs(v))) if v.size else 0.0)
    if np.sqrt(nrm2) < DEGENERACY_THRESHOLD * scale:
        raise DegenerateDirectionError("direction matrix is numerically zero")
    return np.eye(v.size) - np.outer(v, v) / nrm2


def spectral_bounds(h: Array) -> SpectralBound:
    """Extreme eigenvalues of a symmetric tensor in its (k*d) x (k*d) matrix form."""
    h = require_symmetric(h)
    w = np.linalg.eigvalsh(0.5 * (h + h.T))
    return SpectralBound(float(w[0]), float(w[-1]))


def is_psd(h: Array, kappa: float = 0.0, slack: float = 1e-10) -> bool:
    """True iff the smallest eigenvalue of symmetric H is >= kappa - slack."""
    return spectral_bounds(h).lambda_min >= kappa - slack


# ---------------------------------------------------------------------------
# Field-level (vectorised) helpers. A tensor field stacks per-cell tensors in
# an array of shape dims + (k*d, k*d); a gradient field has dims + (k, d).
# These are hot paths for the integrator, hence einsum instead of per-cell
# python loops.


def apply_field(hfield: Array, dfield: Array) -> Array:
    """Per-cell tensor application over whole fields."""
    hfield = np.asarray(hfield, dtype=float)
    dfield = np.asarray(dfield, dtype=float)
    k, d = dfield.shape[-2:]
    if hfield.shape[-2:] != (k * d, k * d) or hfield.shape[:-2] != dfield.shape[:-2]:
        raise DimensionError(
            f"field shapes incompatible: {hfield.shape} vs {dfield.shape}"
        )
    flat = dfield.reshape(dfield.shape[:-2] + (k * d,))
    out = np.einsum("...ab,...b->...a", hfield, flat)
    return out.reshape(dfield.shape)


def eigvalsh_field(hfield: Array) -> Array:
    """Eigenvalues of every cell tensor, ascending along the last axis."""
    return np.linalg.eigvalsh(hfield)


def min_eig_field(hfield: Array) -> float:
    """Smallest eigenvalue over all cells of a symmetric tensor field."""
    return float(np.min(np.linalg.eigvalsh(hfield)[..., 0]))
