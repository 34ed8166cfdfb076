"""Node velocities of an odd-odd bilinear field by FFT convolution.

Each cell's bilinear restriction is a sum of four corner basis functions, so
the velocity at every node is a sum of four discrete convolutions of corner
value arrays (over the odd-reflected plane) with precomputed cell responses.
Responses for offsets within a few cells come from the adaptive singular
quadrature; the rest use a 6x6 Gauss rule.  Without a cutoff the responses
scale exactly as ``h^(1 - 2 alpha)``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import fft as sfft

from .field import ScalarField
from .kernels import KernelParams, free_components
from .velocity import QuadConfig, quadrant_velocity

NEAR = 3
CORNERS = ((0, 0), (1, 0), (0, 1), (1, 1))


def _corner_weight(k, s, t):
    cx, cy = CORNERS[k]
    return (s if cx else 1 - s) * (t if cy else 1 - t)


def _near_response(kp: KernelParams, h: float, m1: int, m2: int, k: int):
    """Velocity at offset ``(m1, m2) h`` from the lower-left corner of one cell."""
    v = np.zeros((2, 2))
    cx, cy = CORNERS[k]
    v[cy, cx] = 1.0
    f = ScalarField(v, h, support=(-h, 2 * h, -h, 2 * h))
    qc = QuadConfig(abs_tol=1e-13 * h ** (1 - 2 * kp.alpha), rel_tol=1e-12, split_radius=h)
    u, _ = quadrant_velocity(f.pieces(), kp, np.array([m1 * h, m2 * h]), qc, qc.abs_tol)
    return u


def _far_response(kp: KernelParams, h: float, M1, M2, k: int, n: int = 6, chunk=20000):
    t, w = np.polynomial.legendre.leggauss(n)
    t, w = 0.5 * (t + 1), 0.5 * w
    S, T = np.meshgrid(t, t)
    W = np.outer(w, w) * h * h
    B = _corner_weight(k, S, T) * W
    out = np.zeros(M1.shape + (2,))
    m1f, m2f = M1.ravel(), M2.ravel()
    res = np.zeros((m1f.size, 2))
    for s in range(0, m1f.size, chunk):
        a1 = (m1f[s:s + chunk, None, None] - S[None]) * h
        a2 = (m2f[s:s + chunk, None, None] - T[None]) * h
        k1, k2 = free_components(kp, a1, a2)
        res[s:s + chunk, 0] = np.sum(k1 * B, axis=(1, 2))
        res[s:s + chunk, 1] = np.sum(k2 * B, axis=(1, 2))
    out[:] = res.reshape(M1.shape + (2,))
    return out


@lru_cache(maxsize=8)
def _responses(alpha: float, cutoff: float, width: float, h: float, n_nodes: int):
    kp = KernelParams(alpha, cutoff, width)
    base_h = 1.0 if cutoff == 0 else h
    N = n_nodes - 1
    m = np.arange(-N + 1, 2 * N + 1)
    M1, M2 = np.meshgrid(m, m)
    V = []
    for k in range(4):
        Vk = _far_response(kp, base_h, M1, M2, k)
        near = (M1 >= -NEAR) & (M1 <= NEAR + 1) & (M2 >= -NEAR) & (M2 <= NEAR + 1)
        for j, i in zip(*np.nonzero(near)):
            Vk[j, i] = _near_response(kp, base_h, int(M1[j, i]), int(M2[j, i]), k)
        if cutoff == 0:
            Vk *= h ** (1 - 2 * alpha)
        V.append(Vk)
    return V


class GridVelocity:
    """Velocity at all nodes of a square odd-odd grid ``[0, (n-1) h]^2``."""

    def __init__(self, kp: KernelParams, h: float, n_nodes: int):
        self.kp = kp
        self.h = float(h)
        self.n = int(n_nodes)
        V = _responses(kp.alpha, kp.cutoff_radius, kp.mollifier_width, self.h, self.n)
        N = self.n - 1
        self._shape = (2 * N + 3 * N - 1, 2 * N + 3 * N - 1)
        self._fshape = tuple(sfft.next_fast_len(s, real=True) for s in self._shape)
        self._VF = [[sfft.rfft2(Vk[..., c], self._fshape) for c in range(2)] for Vk in V]

    def corner_arrays(self, values: np.ndarray):
        """Corner values of the cells of the odd-reflected plane, indexed from ``-N``."""
        v = values
        N = self.n - 1
        C = [v[:-1, :-1], v[:-1, 1:], v[1:, :-1], v[1:, 1:]]
        out = [np.zeros((2 * N, 2 * N)) for _ in range(4)]
        # reflection across x1 = 0 swaps left/right corners and flips sign; same for x2
        for r1 in (1, -1):
            for r2 in (1, -1):
                sl1 = slice(N, 2 * N) if r1 == 1 else slice(N - 1, None, -1)
                sl2 = slice(N, 2 * N) if r2 == 1 else slice(N - 1, None, -1)
                for k, (cx, cy) in enumerate(CORNERS):
                    src = CORNERS.index((cx if r1 == 1 else 1 - cx, cy if r2 == 1 else 1 - cy))
                    out[k][sl2, sl1] = r1 * r2 * C[src]
        return out

    def __call__(self, field: ScalarField) -> np.ndarray:
        """Array of shape ``(n, n, 2)`` with the velocity at every stored node."""
        if field.shape != (self.n, self.n) or abs(field.h - self.h) > 1e-12 * self.h:
            raise ValueError("field grid does not match the precomputed responses")
        if not (field.odd_x1 and field.odd_x2) or field.origin != (0.0, 0.0):
            raise ValueError("grid velocity expects an odd-odd field stored from the origin")
        N = self.n - 1
        acc = [0.0, 0.0]
        for k, Ck in enumerate(self.corner_arrays(field.values)):
            CF = sfft.rfft2(Ck, self._fshape)
            for c in range(2):
                acc[c] = acc[c] + CF * self._VF[k][c]
        u = np.empty((self.n, self.n, 2))
        for c in range(2):
            full = sfft.irfft2(acc[c], self._fshape)
            u[..., c] = full[2 * N - 1:3 * N, 2 * N - 1:3 * N]
        return u
