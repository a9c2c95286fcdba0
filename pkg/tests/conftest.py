import numpy as np
import pytest

from relaxdiff.grid import GridSpec


def random_symmetric_tensor(rng, n, scale=1.0):
    m = scale * rng.standard_normal((n, n))
    return 0.5 * (m + m.T)


def random_psd_tensor(rng, n, floor=0.0):
    m = rng.standard_normal((n, n))
    return m @ m.T + floor * np.eye(n)


def random_psd_field(rng, dims, n, floor=0.0):
    cells = int(np.prod(dims))
    m = rng.standard_normal((cells, n, n))
    field = np.einsum("cij,ckj->cik", m, m) / n + floor * np.eye(n)
    return field.reshape(tuple(dims) + (n, n))


def smooth_image(n, k=3, amps=(0.6, 0.5, 0.4)):
    """Cosine-product test image with O(amp * pi / n) gradients."""
    x = (np.arange(n) + 0.5) / n
    xx, yy = np.meshgrid(x, x, indexing="ij")
    chans = [
        amps[0] * np.cos(np.pi * xx) * np.cos(np.pi * yy),
        amps[1 % len(amps)] * np.cos(2 * np.pi * xx) * np.cos(np.pi * yy),
        amps[2 % len(amps)] * np.cos(np.pi * xx) * np.cos(2 * np.pi * yy),
    ]
    return np.stack(chans[:k], axis=-1)


def disk_image(n=64, radius=20.0, inside=(0.75, 0.70, 0.65), outside=(0.25, 0.30, 0.35)):
    """Piecewise-constant disk in [0, 1]; returns (image, radius map)."""
    c = (n - 1) / 2
    yy, xx = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    r = np.sqrt((xx - c) ** 2 + (yy - c) ** 2)
    img = np.empty((n, n, 3))
    mask = r <= radius
    for ch in range(3):
        img[..., ch] = np.where(mask, inside[ch], outside[ch])
    return img, r


@pytest.fixture
def rng():
    return np.random.default_rng(20240915)


@pytest.fixture
def grid_16x16_rgb():
    return GridSpec(dims=(16, 16), channels=3)
