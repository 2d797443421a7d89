"""Isotropic elastic background, plane incident waves and the Kupradze tensor.

The fundamental solution of the time-harmonic Navier operator
``mu*Lap + (lam+mu)*grad div + omega**2`` is written as

    Gamma(x, y) = Phi_s(r)/mu * I + grad grad H(r),
    H = (Phi_s - Phi_p) / omega**2,

with ``Phi_k = exp(i k r) / (4 pi r)``.  Every evaluator below reduces the
tensor to two radial coefficients, ``Gamma = alpha(r) I + beta(r) rhat rhat``,
so batched callers (Foldy assembly, volume potentials) can work on flat
arrays of distances.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ElasticMedium",
    "IncidentPlaneWave",
    "GreenBoundConstants",
    "make_medium",
    "kupradze_coefficients",
    "kupradze_tensor",
    "kupradze_gradient",
    "kelvin_tensor",
    "kupradze_series",
    "dynamic_remainder_at_origin",
    "green_bound_constants",
]

# below this value of kappa_s * r the closed form loses digits to
# cancellation inside (Phi_s - Phi_p)/omega**2; a power series takes over
SERIES_SWITCH = 0.2
_SERIES_TERMS = 24


@dataclass(frozen=True)
class ElasticMedium:
    """Homogeneous isotropic background with normalised density."""

    lam: float
    mu: float
    omega: float
    rho_background: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"shear modulus must satisfy mu > 0, got mu={self.mu}")
        if not 3 * self.lam + 2 * self.mu > 0:
            raise ValueError(
                "Lame pair must satisfy 3*lambda + 2*mu > 0, got "
                f"3*{self.lam} + 2*{self.mu} = {3 * self.lam + 2 * self.mu}"
            )
        if not self.omega >= 0:
            raise ValueError(f"frequency must be >= 0, got omega={self.omega}")

    @property
    def c_p(self) -> float:
        return math.sqrt(self.lam + 2 * self.mu)

    @property
    def c_s(self) -> float:
        return math.sqrt(self.mu)

    @property
    def kappa_p(self) -> float:
        return self.omega / self.c_p

    @property
    def kappa_s(self) -> float:
        return self.omega / self.c_s

    def as_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "mu": self.mu,
            "omega": self.omega,
            "rho_background": self.rho_background,
        }


def make_medium(lam: float, mu: float, omega: float) -> ElasticMedium:
    return ElasticMedium(float(lam), float(mu), float(omega))


@dataclass(frozen=True)
class IncidentPlaneWave:
    """``U(x) = alpha*theta*exp(i kp theta.x) + beta*theta_perp*exp(i ks theta.x)``."""

    theta: tuple
    theta_perp: tuple
    alpha: complex = 1.0
    beta: complex = 0.0

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float)
        tp = np.asarray(self.theta_perp, dtype=float)
        if th.shape != (3,) or tp.shape != (3,):
            raise ValueError("theta and theta_perp must be 3-vectors")
        if abs(np.linalg.norm(th) - 1) > 1e-12 or abs(np.linalg.norm(tp) - 1) > 1e-12:
            raise ValueError("theta and theta_perp must be unit vectors")
        if abs(th @ tp) > 1e-12:
            raise ValueError("theta_perp must be orthogonal to theta")
        object.__setattr__(self, "theta", tuple(float(v) for v in th))
        object.__setattr__(self, "theta_perp", tuple(float(v) for v in tp))
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "beta", complex(self.beta))

    @classmethod
    def along(cls, theta, alpha=1.0, beta=0.0, theta_perp=None):
        """Build a wave from a (not necessarily unit) direction.

        When ``theta_perp`` is omitted, a perpendicular unit vector is chosen
        deterministically from the coordinate axis least aligned with theta.
        """
        th = np.asarray(theta, dtype=float)
        th = th / np.linalg.norm(th)
        if theta_perp is None:
            e = np.zeros(3)
            e[np.argmin(np.abs(th))] = 1.0
            tp = e - (e @ th) * th
        else:
            tp = np.asarray(theta_perp, dtype=float)
            tp = tp - (tp @ th) * th
        tp = tp / np.linalg.norm(tp)
        return cls(tuple(th), tuple(tp), alpha, beta)

    def field(self, medium: ElasticMedium, x) -> np.ndarray:
        """Evaluate the wave at points ``x`` of shape (..., 3)."""
        x = np.asarray(x, dtype=float)
        th = np.asarray(self.theta)
        phase = x @ th
        p = self.alpha * np.exp(1j * medium.kappa_p * phase)
        s = self.beta * np.exp(1j * medium.kappa_s * phase)
        return p[..., None] * th + s[..., None] * np.asarray(self.theta_perp)

    def scaled(self, factor: complex) -> "IncidentPlaneWave":
        return IncidentPlaneWave(
            self.theta, self.theta_perp, self.alpha * factor, self.beta * factor
        )

    def as_dict(self) -> dict:
        return {
            "theta": list(self.theta),
            "theta_perp": list(self.theta_perp),
            "alpha": [self.alpha.real, self.alpha.imag],
            "beta": [self.beta.real, self.beta.imag],
        }


# --------------------------------------------------------------------------
# radial building blocks


def _helmholtz_derivatives(k: float, r: np.ndarray):
    """Phi_k and its first three radial derivatives."""
    e = np.exp(1j * k * r) / (4 * np.pi)
    kr = k * r
    f0 = e / r
    f1 = e * (1j * kr - 1) / r**2
    f2 = e * (2 - 2j * kr - kr**2) / r**3
    f3 = e * (-6 + 6j * kr + 3 * kr**2 - 1j * kr**3) / r**4
    return f0, f1, f2, f3


def _series_coefficients(medium: ElasticMedium, nterms: int = _SERIES_TERMS):
    """Taylor coefficients c_l of H = sum_l c_l r**(l-1), l >= 2."""
    l = np.arange(2, nterms + 2)
    ks, kp = medium.kappa_s, medium.kappa_p
    fact = np.array([math.factorial(int(n)) for n in l], dtype=float)
    c = (1j**l) * (ks ** (l - 2) / medium.c_s**2 - kp ** (l - 2) / medium.c_p**2)
    return l, c / (4 * np.pi * fact)


def _h_terms(medium: ElasticMedium, r: np.ndarray, closed: np.ndarray, need_grad: bool):
    """Return (H'/r, F, F') where F = H'' - H'/r.

    ``closed`` selects, per entry, the closed form; the other entries use
    the power series which stays accurate as kappa*r -> 0.
    """
    h1r = np.empty(r.shape, dtype=complex)
    F = np.empty(r.shape, dtype=complex)
    Fp = np.empty(r.shape, dtype=complex) if need_grad else None
    w2 = medium.omega**2

    if np.any(closed):
        rc = r[closed]
        _, s1, s2, s3 = _helmholtz_derivatives(medium.kappa_s, rc)
        _, p1, p2, p3 = _helmholtz_derivatives(medium.kappa_p, rc)
        d1, d2, d3 = s1 - p1, s2 - p2, s3 - p3
        h1r[closed] = d1 / rc / w2
        F[closed] = (d2 - d1 / rc) / w2
        if need_grad:
            Fp[closed] = (d3 - d2 / rc + d1 / rc**2) / w2

    series = ~closed
    if np.any(series):
        rs = r[series]
        l, c = _series_coefficients(medium)
        # powers r**(l-3) for every term, shape (n, nterms)
        pw = rs[:, None] ** (l - 3)[None, :]
        h1r[series] = pw @ (c * (l - 1))
        F[series] = pw @ (c * (l - 1) * (l - 3))
        if need_grad:
            Fp[series] = (pw / rs[:, None]) @ (c * (l - 1) * (l - 3) ** 2)
    return h1r, F, Fp


def kupradze_coefficients(medium: ElasticMedium, r, with_derivatives: bool = False):
    """Radial coefficients of the Kupradze tensor.

    Returns ``alpha, beta`` with ``Gamma = alpha I + beta rhat rhat``.  With
    ``with_derivatives`` also returns ``(dP, F, dF)`` needed by the gradient,
    where ``P = Phi_s/mu`` and ``F = beta``.
    """
    r = np.asarray(r, dtype=float)
    shape = r.shape
    r = r.ravel()
    if medium.omega == 0:
        out = _kelvin_coefficients(medium, r, with_derivatives)
        return tuple(o.reshape(shape) for o in out)

    ks = medium.kappa_s
    closed = ks * r >= SERIES_SWITCH
    h1r, F, Fp = _h_terms(medium, r, closed, with_derivatives)
    P0, P1, _, _ = _helmholtz_derivatives(ks, r)
    alpha = P0 / medium.mu + h1r
    beta = F
    if not with_derivatives:
        return alpha.reshape(shape), beta.reshape(shape)
    return (
        alpha.reshape(shape),
        beta.reshape(shape),
        (P1 / medium.mu).reshape(shape),
        F.reshape(shape),
        Fp.reshape(shape),
    )


def _kelvin_coefficients(medium: ElasticMedium, r: np.ndarray, with_derivatives: bool):
    a = (1 / medium.mu + 1 / (medium.lam + 2 * medium.mu)) / (8 * np.pi)
    b = (1 / medium.mu - 1 / (medium.lam + 2 * medium.mu)) / (8 * np.pi)
    alpha = (a / r).astype(complex)
    beta = (b / r).astype(complex)
    if not with_derivatives:
        return alpha, beta
    # P = 1/(4 pi mu r); the remaining part of alpha comes from H'/r
    dP = (-1 / (4 * np.pi * medium.mu) / r**2).astype(complex)
    return alpha, beta, dP, beta, (-b / r**2).astype(complex)


def _split(x, y, cutoff):
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    if d.shape[-1] != 3:
        raise ValueError("points must have a trailing dimension of 3")
    r = np.linalg.norm(d, axis=-1)
    if np.any(r <= cutoff):
        raise ValueError(
            f"singular evaluation: |x - y| = {np.min(r):.3e} is below the "
            f"cutoff {cutoff:.1e}; use the quadrature routines for coincident points"
        )
    return d, r, d / r[..., None]


def kupradze_tensor(medium: ElasticMedium, x, y, cutoff: float = 1e-10) -> np.ndarray:
    """Gamma^omega(x, y) for points of shape (..., 3); returns (..., 3, 3)."""
    _, r, rh = _split(x, y, cutoff)
    alpha, beta = kupradze_coefficients(medium, r)
    eye = np.eye(3)
    return alpha[..., None, None] * eye + beta[..., None, None] * rh[..., :, None] * rh[..., None, :]


def kelvin_tensor(lam: float, mu: float, x, y, cutoff: float = 1e-10) -> np.ndarray:
    """Static Kelvin tensor Gamma^0(x, y)."""
    return kupradze_tensor(ElasticMedium(lam, mu, 0.0), x, y, cutoff)


def kupradze_gradient(medium: ElasticMedium, x, y, cutoff: float = 1e-10) -> np.ndarray:
    """Gradient with respect to ``y``: ``out[..., k, i, j] = d Gamma_ij / d y_k``."""
    _, r, rh = _split(x, y, cutoff)
    _, _, dP, F, dF = kupradze_coefficients(medium, r, with_derivatives=True)
    eye = np.eye(3)
    rk = rh[..., :, None, None]
    ri = rh[..., None, :, None]
    rj = rh[..., None, None, :]
    rrr = rk * ri * rj
    sym = (
        eye[:, :, None] * rj  # delta_ki r_j
        + eye[:, None, :] * ri  # delta_kj r_i
        + eye[None, :, :] * rk  # delta_ij r_k
    )
    Fr = (F / r)[..., None, None, None]
    dx = dP[..., None, None, None] * rk * eye + dF[..., None, None, None] * rrr + Fr * (sym - 2 * rrr)
    # the kernel depends on x - y only
    return -dx


def kupradze_series(medium: ElasticMedium, x, y, nterms: int | None = None, tol: float = 1e-16):
    """Reference evaluation by the absolutely convergent power series.

    Summation stops after ``nterms`` terms, or, when ``nterms`` is None, once
    the factorial bound of the next term drops below ``tol`` times the
    running sum.  Intended as an independent check of :func:`kupradze_tensor`.
    """
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = float(np.linalg.norm(d))
    ks, kp, w2 = medium.kappa_s, medium.kappa_p, medium.omega**2
    outer = np.outer(d, d)
    iso = 0j
    aniso = 0j
    l = 0
    while True:
        pre = (1j**l) / (math.factorial(l) * (l + 2)) / (4 * np.pi)
        if w2 == 0:
            # kappa**(l+2)/omega**2 = kappa**l / c**2 survives only for l = 0
            if l > 0:
                break
            a_l = (l + 1) / medium.c_s**2 + 1 / medium.c_p**2
            b_l = 1 / medium.c_s**2 - 1 / medium.c_p**2
        else:
            a_l = ((l + 1) * ks ** (l + 2) + kp ** (l + 2)) / w2
            b_l = (ks ** (l + 2) - kp ** (l + 2)) / w2
        iso += pre * a_l * r ** (l - 1)
        aniso -= pre * (l - 1) * b_l * r ** (l - 3)
        l += 1
        if nterms is not None:
            if l >= nterms:
                break
        else:
            kmax = max(ks, kp)
            bound = (l + 2) * (kmax * r) ** l / math.factorial(l) / max(r, 1e-300)
            scale = abs(iso) + abs(aniso) * r**2
            if l > 2 and bound * kmax**2 / max(w2, 1e-300) < tol * scale:
                break
            if l > 400:
                break
    return iso * np.eye(3) + aniso * outer


def dynamic_remainder_at_origin(medium: ElasticMedium) -> np.ndarray:
    """Limit of Gamma^omega - Gamma^0 as |x - y| -> 0 (a multiple of I)."""
    if medium.omega == 0:
        return np.zeros((3, 3), dtype=complex)
    ks, kp = medium.kappa_s, medium.kappa_p
    val = 1j * (2 * ks**3 + kp**3) / (12 * np.pi * medium.omega**2)
    return val * np.eye(3)


@dataclass(frozen=True)
class GreenBoundConstants:
    c7: float
    c8: float
    c9: float
    c10: float
    n_omega: int
    c_ring: float
    reliable: bool = True


def _geometric_tail(q: float, n: int) -> float:
    # (1 - q**n) / (1 - q) + 1 / 2**(n-1)
    head = n if q == 1 else (1 - q**n) / (1 - q)
    return head + 2.0 ** (1 - n)


def green_bound_constants(
    medium: ElasticMedium, diam_omega: float, strict: bool = False
) -> GreenBoundConstants:
    """Constants of the pointwise bounds on Gamma^omega and its gradient.

    The bounds are derived under ``max(kappa_s, kappa_p) < 2/diam_omega``.
    Outside that regime a warning is issued and ``reliable`` is False, or a
    ValueError is raised when ``strict``.
    """
    ks, kp = medium.kappa_s, medium.kappa_p
    kmax = max(ks, kp)
    reliable = kmax < 2 / diam_omega
    if not reliable:
        msg = (
            f"wavenumber {kmax:.6g} violates max(kappa_s, kappa_p) < 2/diam = "
            f"{2 / diam_omega:.6g}; the Green bounds are not guaranteed"
        )
        if strict:
            raise ValueError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)

    cs2, cp2 = medium.c_s**2, medium.c_p**2
    w2 = medium.omega**2
    n = int(math.floor(2 * diam_omega * kmax * math.e**2))
    qs = 0.5 * ks * diam_omega
    qp = 0.5 * kp * diam_omega
    ts = _geometric_tail(qs, n)
    tp = _geometric_tail(qp, n)
    c7 = 1 / cs2 + 2 / cp2
    c9 = 3 * (1 / cs2 + 1 / cp2)
    c8 = 2 * ks / cs2 * ts + kp / cp2 * tp
    c10 = 2 * w2 / cs2**2 * (1 / 8 + ts) + w2 / cp2**2 * (1 / 4 + tp)
    c_ring = max(c7, c8 * diam_omega, c8, c10 * diam_omega)
    return GreenBoundConstants(c7, c8, c9, c10, n, c_ring, reliable)
