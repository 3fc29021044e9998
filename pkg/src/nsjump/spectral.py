"""Divergence-free spectral velocity fields on the 2-torus.

Fields live on the block |k|_inf <= cutoff of integer wavevectors, with the
mean mode k=(0,0) excluded. All torus integrals are normalized (mean over
[0,2pi)^2), so Parseval holds without 2*pi factors: |u|_H^2 = sum_k |u_k|^2.

The sigma-norm scale uses the multiplier lambda_k = 1 + |k|^2:

    norm(u, sigma)^2 = sum_k lambda_k^sigma |u_k|^2

sigma = 0 is the H norm, sigma = 1 the V norm (exactly |u|_H^2 + |grad u|^2),
sigma = s the V_s norm, sigma = s+1 the U norm and sigma = -(s+1) the U' norm.

The advective nonlinearity is evaluated as an exact convolution over the
truncated block (no aliasing), which is what makes the cancellation
b(u, v, v) = 0 hold to round-off.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from ._jit import JIT_ENABLED, njit

WaveIndex = tuple[int, int]


@dataclass(frozen=True)
class SpaceScale:
    """Sobolev exponents of the space scale H, V, V_s, U, U'."""

    s: float = 2.5

    def __post_init__(self):
        if not self.s > 2.0:
            raise ValueError(f"space scale requires s > 2, got s={self.s}")

    @property
    def u_exponent(self) -> float:
        return self.s + 1.0

    @property
    def sigma_h(self) -> float:
        return 0.0

    @property
    def sigma_v(self) -> float:
        return 1.0

    @property
    def sigma_vs(self) -> float:
        return self.s

    @property
    def sigma_u(self) -> float:
        return self.s + 1.0

    @property
    def sigma_u_prime(self) -> float:
        return -(self.s + 1.0)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Velocity field as complex amplitudes on the wavevector block.

    amp[c, k1 + n, k2 + n] is component c of the mode at k = (k1, k2),
    n = cutoff. Both k and -k are stored; reality means amp at -k is the
    conjugate of amp at k. Instances are treated as immutable values.
    """

    amp: np.ndarray
    cutoff: int

    def __post_init__(self):
        n = self.cutoff
        if n < 1:
            raise ValueError(f"cutoff must be >= 1, got {n}")
        if self.amp.shape != (2, 2 * n + 1, 2 * n + 1):
            raise ValueError(
                f"amplitude array shape {self.amp.shape} does not match cutoff {n}"
            )

    def get(self, k: WaveIndex) -> np.ndarray:
        """Complex 2-vector at wavevector k (a copy)."""
        k1, k2 = k
        n = self.cutoff
        if max(abs(k1), abs(k2)) > n:
            return np.zeros(2, dtype=complex)
        return self.amp[:, k1 + n, k2 + n].copy()

    def modes(self) -> Iterator[tuple[WaveIndex, np.ndarray]]:
        """Iterate (k, amplitude 2-vector) over modes with nonzero amplitude."""
        n = self.cutoff
        nz = np.argwhere(np.abs(self.amp).sum(axis=0) > 0.0)
        for a1, a2 in nz:
            yield (int(a1 - n), int(a2 - n)), self.amp[:, a1, a2].copy()

    def __add__(self, other: "SpectralField") -> "SpectralField":
        a, b = _common_block(self, other)
        return SpectralField(a.amp + b.amp, a.cutoff)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        a, b = _common_block(self, other)
        return SpectralField(a.amp - b.amp, a.cutoff)

    def __mul__(self, c: float) -> "SpectralField":
        return SpectralField(self.amp * c, self.cutoff)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(-self.amp, self.cutoff)


# ---------------------------------------------------------------------------
# cached per-cutoff index arrays


_CACHE: dict[int, dict[str, np.ndarray]] = {}


def _tables(n: int) -> dict[str, np.ndarray]:
    tab = _CACHE.get(n)
    if tab is None:
        k = np.arange(-n, n + 1)
        k1 = k[:, None] * np.ones_like(k)[None, :]
        k2 = np.ones_like(k)[:, None] * k[None, :]
        ksq = (k1 ** 2 + k2 ** 2).astype(float)
        lam = 1.0 + ksq
        safe = np.where(ksq > 0.0, ksq, 1.0)
        pxx = np.where(ksq > 0.0, 1.0 - k1 * k1 / safe, 0.0)
        pxy = np.where(ksq > 0.0, -k1 * k2 / safe, 0.0)
        pyy = np.where(ksq > 0.0, 1.0 - k2 * k2 / safe, 0.0)
        tab = {"k1": k1.astype(float), "k2": k2.astype(float), "ksq": ksq,
               "lam": lam, "pxx": pxx, "pxy": pxy, "pyy": pyy}
        _CACHE[n] = tab
    return tab


def zero_field(cutoff: int) -> SpectralField:
    s = 2 * cutoff + 1
    return SpectralField(np.zeros((2, s, s), dtype=complex), cutoff)


def from_modes(modes: dict[WaveIndex, tuple[complex, complex]],
               cutoff: int, mirror: bool = True) -> SpectralField:
    """Build a field from explicit mode amplitudes.

    With mirror=True (default) any mode whose conjugate partner -k is not
    listed gets the partner filled in as the complex conjugate, so reality
    holds by construction.
    """
    u = zero_field(cutoff)
    n = cutoff
    for (k1, k2), vec in modes.items():
        if (k1, k2) == (0, 0):
            raise ValueError("mean mode k=(0,0) is excluded")
        if max(abs(k1), abs(k2)) > n:
            raise ValueError(f"mode {(k1, k2)} outside block |k|_inf <= {n}")
        u.amp[:, k1 + n, k2 + n] = np.asarray(vec, dtype=complex)
    if mirror:
        for (k1, k2), vec in modes.items():
            if (-k1, -k2) not in modes:
                u.amp[:, -k1 + n, -k2 + n] = np.conj(np.asarray(vec, dtype=complex))
    return u


def _common_block(u: SpectralField, v: SpectralField) -> tuple[SpectralField, SpectralField]:
    if u.cutoff == v.cutoff:
        return u, v
    n = max(u.cutoff, v.cutoff)
    return embed(u, n), embed(v, n)


def embed(u: SpectralField, cutoff: int) -> SpectralField:
    """Re-embed u into a block of size cutoff >= u.cutoff (zero padding)."""
    if cutoff == u.cutoff:
        return u
    if cutoff < u.cutoff:
        raise ValueError("embed target block smaller than the field support")
    out = zero_field(cutoff)
    lo = cutoff - u.cutoff
    hi = cutoff + u.cutoff + 1
    out.amp[:, lo:hi, lo:hi] = u.amp
    return out


# ---------------------------------------------------------------------------
# basic operators


def leray_project(raw) -> SpectralField:
    """Project onto divergence-free fields: u_k <- (I - k k^T / |k|^2) u_k.

    Accepts a SpectralField or a dict of mode amplitudes (which must already
    satisfy reality symmetry). A nonzero mean mode is rejected.
    """
    if isinstance(raw, dict):
        for k, vec in raw.items():
            if tuple(k) == (0, 0) and np.any(np.asarray(vec) != 0):
                raise ValueError("mean mode k=(0,0) must have zero amplitude")
        cut = max(max(abs(k1), abs(k2)) for (k1, k2) in raw) if raw else 1
        raw = from_modes(raw, max(cut, 1), mirror=False)
    tab = _tables(raw.cutoff)
    u1, u2 = raw.amp[0], raw.amp[1]
    out = np.empty_like(raw.amp)
    out[0] = tab["pxx"] * u1 + tab["pxy"] * u2
    out[1] = tab["pxy"] * u1 + tab["pyy"] * u2
    return SpectralField(out, raw.cutoff)


def norm(u: SpectralField, sigma: float) -> float:
    """The sigma-scale norm (sum_k lambda_k^sigma |u_k|^2)^(1/2)."""
    tab = _tables(u.cutoff)
    w = tab["lam"] ** sigma
    return float(np.sqrt(np.sum(w * (np.abs(u.amp) ** 2))))


def inner_h(u: SpectralField, v: SpectralField) -> float:
    """H-scalar product; real by reality symmetry."""
    a, b = _common_block(u, v)
    return float(np.real(np.sum(a.amp * np.conj(b.amp))))


def project_Pn(u: SpectralField, n: int) -> SpectralField:
    """H-orthogonal projection onto the block |k|_inf <= n."""
    if n < 1:
        raise ValueError("projection cutoff must be >= 1")
    if n >= u.cutoff:
        return u
    lo = u.cutoff - n
    hi = u.cutoff + n + 1
    return SpectralField(u.amp[:, lo:hi, lo:hi].copy(), n)


def stokes_apply(u: SpectralField) -> SpectralField:
    """Stokes operator: the Fourier multiplier |k|^2."""
    tab = _tables(u.cutoff)
    return SpectralField(u.amp * tab["ksq"], u.cutoff)


def stokes_An(u: SpectralField, n: int) -> SpectralField:
    """Galerkin Stokes operator: block truncation after the |k|^2 multiplier."""
    return project_Pn(stokes_apply(u), n)


def _smoothstep(x):
    """Quintic smoothstep q with q(0)=0, q(1)=1, q(1/2)=1/2, C^2 at the ends."""
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (6.0 * x ** 2 - 15.0 * x + 10.0)


def cutoff_theta(n: int, r) -> float:
    """Radial cutoff: 1 on [0,n], 0 on [n+1,inf), quintic transition between."""
    if n < 1:
        raise ValueError("cutoff index must be >= 1")
    r = np.asarray(r, dtype=float)
    val = 1.0 - _smoothstep(r - n)
    if val.ndim == 0:
        return float(val)
    return val


# ---------------------------------------------------------------------------
# advection kernel (hot path): exact convolution over the block


@njit(cache=True)
def _advect_kernel(u, w, n):  # pragma: no cover - exercised via advect()
    # Only the half-block a1 < n (plus the row a1 == n, a2 <= n) is summed;
    # the conjugate mirror fills the rest, which is valid because both input
    # fields satisfy the reality symmetry amp(-k) = conj(amp(k)).
    s = 2 * n + 1
    out = np.zeros_like(u)
    for a1 in range(n + 1):
        a2_top = n if a1 == n else s - 1
        for a2 in range(a2_top + 1):
            acc0 = 0.0 + 0.0j
            acc1 = 0.0 + 0.0j
            for b1 in range(s):
                c1 = a1 - b1 + n
                if c1 < 0 or c1 >= s:
                    continue
                l1 = c1 - n
                for b2 in range(s):
                    c2 = a2 - b2 + n
                    if c2 < 0 or c2 >= s:
                        continue
                    l2 = c2 - n
                    coef = 1j * (u[0, b1, b2] * l1 + u[1, b1, b2] * l2)
                    acc0 += coef * w[0, c1, c2]
                    acc1 += coef * w[1, c1, c2]
            out[0, a1, a2] = acc0
            out[1, a1, a2] = acc1
            out[0, s - 1 - a1, s - 1 - a2] = np.conj(acc0)
            out[1, s - 1 - a1, s - 1 - a2] = np.conj(acc1)
    return out


def _advect_fallback(u, w, n):
    from scipy.signal import convolve2d

    tab = _tables(n)
    s = 2 * n + 1
    out = np.zeros_like(u)
    for j in range(2):
        d1wj = 1j * tab["k1"] * w[j]
        d2wj = 1j * tab["k2"] * w[j]
        full = convolve2d(u[0], d1wj) + convolve2d(u[1], d2wj)
        out[j] = full[n:n + s, n:n + s]
    return out


def advect(u: SpectralField, w: SpectralField) -> SpectralField:
    """Spectral (u . grad) w truncated to the common block, computed as an
    exact convolution over wavevector pairs (no aliasing).

    Both inputs must be real vector fields, i.e. amp(-k) = conj(amp(k));
    every constructor in this module guarantees that.
    """
    a, b = _common_block(u, w)
    if JIT_ENABLED:
        out = _advect_kernel(a.amp, b.amp, a.cutoff)
    else:
        out = _advect_fallback(a.amp, b.amp, a.cutoff)
    return SpectralField(out, a.cutoff)


def trilinear_b(u: SpectralField, w: SpectralField, v: SpectralField) -> float:
    """The trilinear form b(u, w, v) = sum_ij mean( u_i d_i w_j v_j )."""
    return inner_h(advect(u, w), v)


def trilinear_b_quadrature(u: SpectralField, w: SpectralField, v: SpectralField,
                           grid_n: int = 32) -> float:
    """Independent real-space evaluation of b on a grid_n x grid_n lattice.

    Exact (up to round-off) whenever grid_n exceeds three times the largest
    field cutoff, since the integrand then has no aliased frequencies.
    """
    fields = [embed(f, max(u.cutoff, w.cutoff, v.cutoff)) for f in (u, w, v)]
    n = fields[0].cutoff
    tab = _tables(n)
    x = 2.0 * np.pi * np.arange(grid_n) / grid_n
    k = np.arange(-n, n + 1)
    e1 = np.exp(1j * np.outer(k, x))

    def to_phys(amp):
        return np.einsum("ckl,kx,ly->cxy", amp, e1, e1)

    u_phys = to_phys(fields[0].amp)
    v_phys = to_phys(fields[2].amp)
    total = np.zeros((grid_n, grid_n), dtype=complex)
    for i, kk in ((0, tab["k1"]), (1, tab["k2"])):
        dw_phys = to_phys(1j * kk * fields[1].amp)
        total += u_phys[i] * np.einsum("cxy,cxy->xy", dw_phys, v_phys)
    return float(np.real(np.mean(total)))


def nonlinearity_Bn(u: SpectralField, n: int, scale: SpaceScale | None = None) -> SpectralField:
    """Truncated nonlinearity: theta_n(|u|_U') P_n Leray((u . grad) u)."""
    if scale is None:
        scale = SpaceScale()
    theta = cutoff_theta(n, norm(u, scale.sigma_u_prime))
    if theta == 0.0:
        return zero_field(min(n, u.cutoff))
    bn = project_Pn(leray_project(advect(u, u)), n)
    return bn * theta


# ---------------------------------------------------------------------------
# random fields and invariant checks


def random_solenoidal_field(cutoff: int, rng: np.random.Generator,
                            decay: float = 2.0, norm_h: float | None = None) -> SpectralField:
    """Random divergence-free field with amplitudes ~ lambda_k^(-decay/2).

    Coefficients are iid complex Gaussians symmetrized for reality, then
    Leray-projected. With norm_h set, the field is rescaled to that H-norm.
    """
    s = 2 * cutoff + 1
    raw = rng.standard_normal((2, s, s)) + 1j * rng.standard_normal((2, s, s))
    tab = _tables(cutoff)
    raw *= tab["lam"] ** (-decay / 2.0)
    sym = 0.5 * (raw + np.conj(raw[:, ::-1, ::-1]))
    sym[:, cutoff, cutoff] = 0.0
    u = leray_project(SpectralField(sym, cutoff))
    if norm_h is not None:
        h = norm(u, 0.0)
        if h > 0.0:
            u = u * (norm_h / h)
    return u


def field_invariant_errors(u: SpectralField) -> dict[str, float]:
    """Round-off-level residuals of the three field invariants."""
    tab = _tables(u.cutoff)
    reality = float(np.max(np.abs(u.amp - np.conj(u.amp[:, ::-1, ::-1]))))
    div = float(np.max(np.abs(tab["k1"] * u.amp[0] + tab["k2"] * u.amp[1])))
    mean_mode = float(np.max(np.abs(u.amp[:, u.cutoff, u.cutoff])))
    return {"reality": reality, "divergence": div, "mean_mode": mean_mode}


# ---------------------------------------------------------------------------
# serialization


_CSV_HEADER = "k1,k2,re_u1,im_u1,re_u2,im_u2"


def _mode_rows(u: SpectralField) -> list[tuple[int, int, float, float, float, float]]:
    rows = []
    for (k1, k2), vec in sorted(u.modes()):
        rows.append((k1, k2, float(vec[0].real), float(vec[0].imag),
                     float(vec[1].real), float(vec[1].imag)))
    return rows


def field_to_json_dict(u: SpectralField) -> dict:
    return {"cutoff": u.cutoff, "modes": [list(r) for r in _mode_rows(u)]}


def field_from_json_dict(d: dict) -> SpectralField:
    u = zero_field(int(d["cutoff"]))
    n = u.cutoff
    for k1, k2, re1, im1, re2, im2 in d["modes"]:
        u.amp[0, int(k1) + n, int(k2) + n] = complex(re1, im1)
        u.amp[1, int(k1) + n, int(k2) + n] = complex(re2, im2)
    return u


def field_to_json(u: SpectralField) -> str:
    return json.dumps(field_to_json_dict(u), sort_keys=True, separators=(",", ":"))


def field_from_json(text: str) -> SpectralField:
    return field_from_json_dict(json.loads(text))


def field_to_csv(u: SpectralField) -> str:
    lines = [_CSV_HEADER]
    for row in _mode_rows(u):
        lines.append(",".join(repr(x) if isinstance(x, float) else str(x) for x in row))
    return "\n".join(lines) + "\n"


def field_from_csv(text: str, cutoff: int | None = None) -> SpectralField:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if lines[0] != _CSV_HEADER:
        raise ValueError("unexpected CSV header for spectral field")
    parsed = []
    for ln in lines[1:]:
        k1, k2, re1, im1, re2, im2 = ln.split(",")
        parsed.append((int(k1), int(k2), float(re1), float(im1), float(re2), float(im2)))
    if cutoff is None:
        cutoff = max((max(abs(p[0]), abs(p[1])) for p in parsed), default=1)
    u = zero_field(max(cutoff, 1))
    n = u.cutoff
    for k1, k2, re1, im1, re2, im2 in parsed:
        u.amp[0, k1 + n, k2 + n] = complex(re1, im1)
        u.amp[1, k1 + n, k2 + n] = complex(re2, im2)
    return u
