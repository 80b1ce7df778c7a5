"""Estabilidad lineal de los estados estacionarios (promedio simétrico).

Para cada modo k != 0 la perturbación w_k(t) cumple la ecuación de renovación
    w_k(t) = psi_k(t) + int_0^t R_k(t - s) w_k(s) ds
y el modo es inestable si existe gamma con Re(gamma) > 0 tal que
    int_0^inf R_k(t) exp(-gamma t) dt = 1.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.stats import linregress

from .errors import (AllModesStableError, GridExhaustedError, NoSignChangeError,
                     QuadratureError, SaturationError)
from .model import g_prime, kernel_fourier_coefficient

logger = logging.getLogger(__name__)

STABLE_RATE = -1.0          # gamma_r cuando C_k está vacío
DEFAULT_K_RANGE = 8
DEDUP_RADIUS = 1e-4
ROOT_RESIDUAL_TOL = 1e-6
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 60
TAIL_TOL = 1e-10
QUAD_TOL = 1e-10
MIN_DECAY_MARGIN = 1e-4
MAX_HORIZON = 2e4
TAIL_SPLIT = 40.0           # exp(-40) ~ 4e-18: más allá R_k es una exponencial pura
GL_ORDER = 16
BASE_PANEL = 0.25
FULL_GRID = (16, 32)


@dataclass(frozen=True)
class ModeContext:
    k: int
    xi: float
    sigma: float
    gp: float
    phik: float
    L: float
    D_k: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "D_k", 2.0 * math.pi * self.k / self.L)
        if not -1.0 <= self.phik <= 1.0:
            raise ValueError(f"phi_k fuera de [-1, 1] ({self.phik})")

    @classmethod
    def from_model(cls, g, xi, kernel, sigma, k):
        return cls(k=int(k), xi=float(xi), sigma=float(sigma), gp=g_prime(g, xi),
                   phik=kernel_fourier_coefficient(kernel, k), L=kernel.L)

    @property
    def prefactor(self):
        return self.gp * self.phik

    @property
    def decay(self):
        """sigma^2 D_k^2 / 2: tasa de decaimiento de exp(-g_k(t, 0))."""
        return 0.5 * self.sigma ** 2 * self.D_k ** 2

    def conjugate(self):
        """Contexto del modo -k."""
        return ModeContext(k=-self.k, xi=self.xi, sigma=self.sigma, gp=self.gp,
                           phik=self.phik, L=self.L)


@dataclass(frozen=True)
class GrowthResult:
    k: int
    roots: tuple
    gamma_r: float
    gamma_i: float
    sufficient_bound_ok: bool
    status: str
    converged_starts: int = 0

    @property
    def gamma(self):
        return complex(self.gamma_r, self.gamma_i)

    @property
    def unstable(self):
        return self.status == "unstable"


def _require_mode(ctx):
    if ctx.k == 0:
        raise ValueError("el modo k = 0 se analiza con zeroth_mode_stable")
    if not ctx.sigma > 0:
        raise ValueError("el núcleo R_k requiere sigma > 0")


def mode_kernel_R(ctx, t):
    """R_k(t) = G'(xi) phi_k (-s^2 b^2 / 2 + i xi b + e^-t) exp[s^2 D b / 2 + i xi D t - s^2 D^2 t / 2],
    con b = D_k (1 - e^-t)."""
    _require_mode(ctx)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("R_k solo está definido para t >= 0")
    s2, D, xi = ctx.sigma ** 2, ctx.D_k, ctx.xi
    decay = np.exp(-t)
    beta = -D * np.expm1(-t)
    poly = -0.5 * s2 * beta ** 2 + 1j * xi * beta + decay
    expo = 0.5 * s2 * D * beta + 1j * xi * D * t - 0.5 * s2 * D * D * t
    return ctx.prefactor * poly * np.exp(expo)


def _psi(ctx, t):
    """psi_k(t) para la perturbación de prueba rho_k(0, eta) = exp(-eta^2 / 2)."""
    s2, D, xi = ctx.sigma ** 2, ctx.D_k, ctx.xi
    decay = np.exp(-t)
    beta = -D * np.expm1(-t)
    g0 = -0.25 * s2 * beta ** 2 - 0.5 * s2 * D * beta + 1j * xi * beta - 1j * xi * D * t + 0.5 * s2 * D * D * t
    dg0 = 0.5 * s2 * (decay - 1.0) * beta + 1j * xi * (1.0 - decay)
    gauss = np.exp(-0.5 * beta ** 2)
    return (-dg0 * gauss + beta * gauss * decay) * np.exp(-g0)


# ---------------------------------------------------------------------------
# Cuadratura
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _gauss_legendre(order=GL_ORDER):
    return np.polynomial.legendre.leggauss(order)


def _panel_edges(ctx, end, freq, refine=1):
    # paneles finos cerca de 0, donde exp(-g_k) varía en una escala 1/sqrt(decay)
    coarse = min(BASE_PANEL, 4.0 / freq) if freq > 0 else BASE_PANEL
    fine = min(coarse, 0.3 / math.sqrt(ctx.decay))
    coarse /= refine
    fine /= refine
    knee = min(end, 3.0)
    edges = np.linspace(0.0, knee, max(1, math.ceil(knee / fine)) + 1)
    if end > knee:
        rest = np.linspace(knee, end, max(1, math.ceil((end - knee) / coarse)) + 1)
        edges = np.concatenate([edges, rest[1:]])
    return edges


def _nodes(edges):
    x, w = _gauss_legendre()
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    t = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return t, weights


def _integrand_frequency(ctx, gamma_imag):
    return abs(gamma_imag - ctx.xi * ctx.D_k) + 1.0


def truncation_horizon(ctx, gamma):
    """T = max(1, 40 / (sigma^2 D_k^2)), duplicado hasta que la cota de la cola sea < 1e-10."""
    gamma = complex(gamma)
    a = ctx.decay
    margin = a + gamma.real
    if margin < MIN_DECAY_MARGIN:
        raise QuadratureError(f"margen de decaimiento {margin:.3g} insuficiente para gamma={gamma}")
    const = abs(ctx.prefactor) * (a + abs(ctx.xi * ctx.D_k))
    horizon = max(1.0, 20.0 / a)
    while True:
        bound = (const + abs(ctx.prefactor) * math.exp(-horizon)) * math.exp(a - margin * horizon) / margin
        if bound < TAIL_TOL:
            return horizon
        horizon *= 2.0
        if horizon > MAX_HORIZON:
            raise QuadratureError(f"la cola no baja de {TAIL_TOL} antes de T={MAX_HORIZON}")


def _truncated_transform(ctx, gamma, horizon, refine):
    t, w = _nodes(_panel_edges(ctx, horizon, _integrand_frequency(ctx, gamma.imag), refine))
    return complex(np.sum(w * mode_kernel_R(ctx, t) * np.exp(-gamma * t)))


def laplace_R(ctx, gamma, horizon=None):
    """int_0^T R_k(t) exp(-gamma t) dt con Gauss-Legendre compuesto.

    Los paneles se parten a la mitad hasta que dos estimaciones consecutivas
    difieren menos de 1e-10.
    """
    _require_mode(ctx)
    gamma = complex(gamma)
    if ctx.decay + gamma.real < MIN_DECAY_MARGIN:
        raise QuadratureError(f"margen de decaimiento insuficiente para gamma={gamma}")
    if ctx.prefactor == 0:
        return 0j
    if horizon is None:
        horizon = truncation_horizon(ctx, gamma)

    previous = _truncated_transform(ctx, gamma, horizon, 1)
    for refine in (2, 4, 8, 16):
        current = _truncated_transform(ctx, gamma, horizon, refine)
        if abs(current - previous) <= QUAD_TOL:
            return current
        previous = current
    raise QuadratureError(f"la cuadratura no convergió para gamma={gamma}")


class _LaplaceTable:
    """Transformada y su derivada para muchos gamma a la vez.

    Integra numéricamente en [0, 40] y suma la cola exacta de la exponencial
    pura G'(xi) phi_k c0 exp(a + lambda t), lambda = i xi D_k - a.
    """

    CHUNK = 128

    def __init__(self, ctx, freq, refine=1):
        t, w = _nodes(_panel_edges(ctx, TAIL_SPLIT, freq, refine))
        r = mode_kernel_R(ctx, t)
        self.t = t
        self.wr = w * r
        self.wtr = w * t * r
        a = ctx.decay
        self.a = a
        self.lam = complex(-a, ctx.xi * ctx.D_k)
        self.c_tail = ctx.prefactor * complex(-a, ctx.xi * ctx.D_k)

    def evaluate(self, gammas):
        gammas = np.atleast_1d(np.asarray(gammas, dtype=complex))
        values = np.empty(gammas.shape, dtype=complex)
        derivs = np.empty(gammas.shape, dtype=complex)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            for start in range(0, gammas.size, self.CHUNK):
                g = gammas[start:start + self.CHUNK]
                e = np.exp(-np.outer(g, self.t))
                shift = g - self.lam
                tail = self.c_tail * np.exp(self.a - shift * TAIL_SPLIT) / shift
                values[start:start + self.CHUNK] = e @ self.wr + tail
                derivs[start:start + self.CHUNK] = -(e @ self.wtr) - tail * (TAIL_SPLIT + 1.0 / shift)
        return values, derivs


# ---------------------------------------------------------------------------
# Raíces de la relación de dispersión
# ---------------------------------------------------------------------------

def default_search(ctx):
    """Rectángulo (re_min, re_max, im_min, im_max) de arranques de Newton."""
    span = 2.0 * abs(ctx.D_k) * max(1.0, abs(ctx.xi)) + 1.0
    return (1e-3, 5.0, -span, span)


def _candidate_frequency(ctx, gammas):
    return max(abs(g.imag) for g in gammas) + abs(ctx.xi * ctx.D_k) + 1.0


def _dedup(roots, radius):
    ordered = sorted(roots, key=lambda z: (-z.real, -abs(z.imag), z.imag))
    kept = []
    for z in ordered:
        if all(abs(z - other) > radius for other in kept):
            kept.append(z)
    return kept


def find_growth_roots(ctx, search=None, tol=DEDUP_RADIUS, grid=FULL_GRID, strict=False):
    """Conjunto C_k dentro del rectángulo de búsqueda.

    Newton vectorizado desde una malla de arranques (partes reales
    logarítmicas, imaginarias lineales). `status` distingue 'unstable',
    'stable' y 'exhausted' (ningún arranque convergió).
    """
    _require_mode(ctx)
    bound_ok = sufficient_mode_bound(ctx)
    if ctx.prefactor == 0:
        return GrowthResult(ctx.k, (), STABLE_RATE, 0.0, bound_ok, "stable")

    re_min, re_max, im_min, im_max = search or default_search(ctx)
    n_re, n_im = grid
    re = np.geomspace(re_min, re_max, n_re) if re_min > 0 else np.linspace(re_min, re_max, n_re)
    im = np.linspace(im_min, im_max, n_im)
    z = (re[:, None] + 1j * im[None, :]).ravel()

    im_extent = max(abs(im_min), abs(im_max))
    table = _LaplaceTable(ctx, freq=im_extent + abs(ctx.xi * ctx.D_k) + 1.0)
    lower = -ctx.decay + MIN_DECAY_MARGIN
    im_bound = 2.0 * im_extent + 1.0
    re_bound = 2.0 * re_max + 1.0

    active = np.ones(z.size, dtype=bool)
    converged = np.zeros(z.size, dtype=bool)
    for _ in range(NEWTON_MAX_ITER):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        values, derivs = table.evaluate(z[idx])
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            step = (values - 1.0) / derivs
            new = z[idx] - step
        ok = (np.isfinite(new) & (new.real > lower) & (new.real < re_bound)
              & (np.abs(new.imag) < im_bound))
        done = ok & (np.abs(step) <= NEWTON_TOL * np.maximum(1.0, np.abs(new)))
        z[idx] = np.where(ok, new, z[idx])
        converged[idx[done]] = True
        active[idx[~ok | done]] = False

    n_conv = int(converged.sum())
    if n_conv == 0:
        if strict:
            raise GridExhaustedError(f"ningún arranque de Newton convergió para k={ctx.k}")
        logger.info("Malla agotada para k=%d, sigma=%.4g: sin convergencia", ctx.k, ctx.sigma)
        return GrowthResult(ctx.k, (), STABLE_RATE, 0.0, bound_ok, "exhausted", 0)

    candidates = _dedup([complex(v) for v in z[converged] if v.real > 0], tol)
    roots = []
    if candidates:
        check, _ = _LaplaceTable(ctx, _candidate_frequency(ctx, candidates), refine=2).evaluate(candidates)
        for gamma, value in zip(candidates, check):
            if abs(value - 1.0) > ROOT_RESIDUAL_TOL:
                logger.warning("Raíz descartada gamma=%s (residuo %.2e)", gamma, abs(value - 1.0))
                continue
            if abs(laplace_R(ctx, gamma) - 1.0) > ROOT_RESIDUAL_TOL:
                logger.warning("Raíz descartada gamma=%s al reevaluar la transformada", gamma)
                continue
            roots.append(gamma)

    if not roots:
        return GrowthResult(ctx.k, (), STABLE_RATE, 0.0, bound_ok, "stable", n_conv)
    dominant = roots[0]
    return GrowthResult(ctx.k, tuple(roots), dominant.real, dominant.imag, bound_ok, "unstable", n_conv)


# ---------------------------------------------------------------------------
# Criterios
# ---------------------------------------------------------------------------

def zeroth_mode_stable(g, xi):
    """Modo 0 estable sii G'(xi) < 1 (igualdad: crecimiento lineal, inestable)."""
    return g_prime(g, xi) < 1.0


def _bound_rhs(sigma, D, xi):
    half = 0.5 * sigma ** 2
    return 1.0 / (1.0 + 3.0 * math.sqrt(2.0 * math.pi) / (sigma * abs(D))
                  + 3.0 * abs(xi) / (half * abs(D)) + math.exp(-1.0) / (1.0 + half * D * D))


def sufficient_mode_bound(ctx):
    """Condición suficiente para int |R_k| < 1."""
    _require_mode(ctx)
    return abs(ctx.prefactor) < _bound_rhs(ctx.sigma, ctx.D_k, ctx.xi)


def uniform_mode_bound(g, xi, kernel, sigma, k_range=DEFAULT_K_RANGE):
    """Versión simplificada con D_1 en lugar de D_k, para todos los k <= k_range."""
    rhs = _bound_rhs(sigma, 2.0 * math.pi / kernel.L, xi)
    gp = g_prime(g, xi)
    return all(abs(gp * kernel_fourier_coefficient(kernel, k)) < rhs for k in range(1, k_range + 1))


def kernel_l1_norm(ctx):
    """int_0^inf |R_k(t)| dt truncado con la misma cota de cola que laplace_R."""
    _require_mode(ctx)
    if ctx.prefactor == 0:
        return 0.0
    horizon = truncation_horizon(ctx, 0.0)
    t, w = _nodes(_panel_edges(ctx, horizon, _integrand_frequency(ctx, 0.0), refine=2))
    return float(np.sum(w * np.abs(mode_kernel_R(ctx, t))))


def resolve_mode(ctx, grid=FULL_GRID):
    """find_growth_roots sin tomar una malla agotada por un modo estable.

    Si ningún arranque converge se repite con la malla completa. Si sigue
    agotada, el modo solo se declara estable cuando ||R_k||_1 < 1; si no,
    GridExhaustedError.
    """
    res = find_growth_roots(ctx, grid=grid)
    if res.status == "exhausted" and tuple(grid) != FULL_GRID:
        logger.info("Malla %s agotada para k=%d, sigma=%.4g; se repite con %s", grid, ctx.k, ctx.sigma, FULL_GRID)
        res = find_growth_roots(ctx, grid=FULL_GRID)
    if res.status != "exhausted":
        return res
    # |L[R_k](gamma)| <= ||R_k||_1 para Re gamma >= 0
    if kernel_l1_norm(ctx) < 1.0:
        return replace(res, status="stable")
    raise GridExhaustedError(f"ningún arranque de Newton convergió para k={ctx.k}, sigma={ctx.sigma:.4g} "
                             f"y ||R_k||_1 >= 1")


def _max_growth_rate(g, xi, kernel, sigma, k_range, grid):
    rate = STABLE_RATE
    for k in range(1, k_range + 1):
        ctx = ModeContext.from_model(g, xi, kernel, sigma, k)
        # cota suficiente cumplida: C_k vacío sin buscar raíces
        if sufficient_mode_bound(ctx):
            continue
        rate = max(rate, resolve_mode(ctx, grid).gamma_r)
    return rate


def critical_sigma(g, xi, kernel, k_range=DEFAULT_K_RANGE, tol=5e-3, bracket=(0.1, 10.0), grid=(8, 16)):
    """Umbral de ruido a partir del cual todos los modos 1..k_range son estables."""
    if not zeroth_mode_stable(g, xi):
        raise ValueError(f"el modo 0 es inestable en xi={xi} (G'={g_prime(g, xi):.4g})")
    if k_range < 1:
        raise ValueError("k_range debe ser >= 1")
    lo, hi = bracket
    if _max_growth_rate(g, xi, kernel, lo, k_range, grid) <= 0:
        raise NoSignChangeError(f"ya es estable en sigma={lo}")
    if _max_growth_rate(g, xi, kernel, hi, k_range, grid) > 0:
        raise NoSignChangeError(f"sigue inestable en sigma={hi}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _max_growth_rate(g, xi, kernel, mid, k_range, grid) > 0:
            lo = mid
        else:
            hi = mid
    sigma_c = 0.5 * (lo + hi)
    logger.info("Umbral de ruido: sigma_c=%.4f (xi=%.4f)", sigma_c, xi)
    return sigma_c


@dataclass(frozen=True)
class UnstableMode:
    k_max: int
    gamma: complex
    velocity: float


def most_unstable_mode(g, xi, kernel, sigma, k_range=DEFAULT_K_RANGE):
    """Modo de mayor gamma_r y velocidad de fase gamma_i L / (2 pi k_max)."""
    best = None
    for k in range(1, k_range + 1):
        res = resolve_mode(ModeContext.from_model(g, xi, kernel, sigma, k))
        if res.unstable and (best is None or res.gamma_r > best.gamma_r):
            best = res
    if best is None:
        raise AllModesStableError(f"todos los modos 1..{k_range} son estables (sigma={sigma})")
    velocity = best.gamma_i * kernel.L / (2.0 * math.pi * best.k)
    return UnstableMode(best.k, best.gamma, velocity)


def growth_curve(g, xi, kernel, sigmas, k=1):
    return [find_growth_roots(ModeContext.from_model(g, xi, kernel, s, k)) for s in sigmas]


def volterra_growth_check(ctx, horizon=400.0, dt=0.05):
    """Resuelve la ecuación de renovación por trapecios y devuelve la pendiente
    de log|w_k| en el último tercio del horizonte."""
    _require_mode(ctx)
    n = int(round(horizon / dt))
    if n < 30:
        raise ValueError("el horizonte debe cubrir al menos 30 pasos")
    t = dt * np.arange(n + 1)
    r = mode_kernel_R(ctx, t)
    psi = _psi(ctx, t)

    w = np.empty(n + 1, dtype=complex)
    w[0] = psi[0]
    denom = 1.0 - 0.5 * dt * r[0]
    for m in range(1, n + 1):
        conv = 0.5 * r[m] * w[0] + np.dot(r[m - 1:0:-1], w[1:m])
        w[m] = (psi[m] + dt * conv) / denom
        if not np.isfinite(w[m]) or abs(w[m]) > 1e250:
            raise SaturationError(f"desborde de w_k en t={t[m]:.2f}")

    tail = slice(2 * n // 3, n + 1)
    mags = np.abs(w[tail])
    if np.any(mags < 1e-290):
        raise SaturationError("subdesborde de w_k en el último tercio del horizonte")
    return float(linregress(t[tail], np.log(mags)).slope)
