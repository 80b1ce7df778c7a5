"""Modelo de Czirók en el toro [0, L): G, núcleo de influencia, estados
estacionarios y esquema de Euler para el sistema de N agentes.

    dx_i = u_i dt
    du_i = [G(<u>_i) - u_i] dt + sigma dW_i
"""

import logging
import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import bisect

from ._neighbors import cell_list_sums, direct_sums
from ._rng import SEED_MASK, make_rng
from .errors import RootBracketError
from .stats import RunSeries, centered_l2_discrepancy, mean_velocity

logger = logging.getLogger(__name__)

G_VARIANTS = ("cubic", "tanh", "odd-polynomial")
KERNEL_VARIANTS = ("top-hat", "uniform")
AVERAGING_MODES = ("symmetric", "normalized")
OBSERVERS = ("mean_velocity", "discrepancy", "positions")

# Por debajo de este número de agentes (o con r > L/4) se usa la suma directa
CELL_LIST_MIN_AGENTS = 64
SCAN_STEP = 1e-2
ROOT_TOL = 1e-10


# ---------------------------------------------------------------------------
# G y núcleo de influencia
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GSpec:
    """Función impar G. `coeffs` son los coeficientes de u, u^3, u^5, ..."""

    variant: str
    h: float = None
    a: float = None
    coeffs: tuple = ()

    def __post_init__(self):
        if self.variant not in G_VARIANTS:
            raise ValueError(f"variante de G desconocida: {self.variant!r}")
        if self.variant == "cubic" and self.h is None:
            raise ValueError("la variante 'cubic' requiere h")
        if self.variant == "tanh" and self.a is None:
            raise ValueError("la variante 'tanh' requiere a")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    @classmethod
    def cubic(cls, h):
        return cls("cubic", h=float(h))

    @classmethod
    def tanh(cls, a):
        return cls("tanh", a=float(a))

    @classmethod
    def odd_polynomial(cls, coeffs):
        return cls("odd-polynomial", coeffs=tuple(coeffs))

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.variant == "cubic":
            return ((self.h + 1.0) / 5.0) * u - (self.h / 125.0) * u ** 3
        if self.variant == "tanh":
            return self.a * np.tanh(u)
        if not self.coeffs:
            return np.zeros_like(u)
        return u * P.polyval(u * u, self.coeffs)

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        if self.variant == "cubic":
            return (self.h + 1.0) / 5.0 - (3.0 * self.h / 125.0) * u ** 2
        if self.variant == "tanh":
            return self.a / np.cosh(u) ** 2
        if not self.coeffs:
            return np.zeros_like(u)
        odd = [(2 * j + 1) * c for j, c in enumerate(self.coeffs)]
        return P.polyval(u * u, odd)

    def potential(self, u):
        """V(u) con V'(u) = u - G(u) y V(0) = 0 (doble pozo si h > 4)."""
        u = np.asarray(u, dtype=float)
        if self.variant == "cubic":
            return ((4.0 - self.h) / 10.0) * u ** 2 + (self.h / 500.0) * u ** 4
        if self.variant == "tanh":
            au = np.abs(u)
            log_cosh = au + np.log1p(np.exp(-2.0 * au)) - math.log(2.0)
            return 0.5 * u ** 2 - self.a * log_cosh
        terms = [c / (2 * j + 2) for j, c in enumerate(self.coeffs)]
        return 0.5 * u ** 2 - (u * u) * P.polyval(u * u, terms) if terms else 0.5 * u ** 2

    def to_dict(self):
        if self.variant == "cubic":
            return {"variant": "cubic", "h": self.h}
        if self.variant == "tanh":
            return {"variant": "tanh", "a": self.a}
        return {"variant": "odd-polynomial", "coeffs": list(self.coeffs)}


@dataclass(frozen=True)
class KernelSpec:
    """Función de influencia phi(||x||) normalizada: (1/L) int_0^L phi = 1."""

    variant: str
    L: float
    r: float = None

    def __post_init__(self):
        if self.variant not in KERNEL_VARIANTS:
            raise ValueError(f"variante de núcleo desconocida: {self.variant!r}")
        if not self.L > 0:
            raise ValueError(f"L debe ser positivo (L={self.L})")
        if self.variant == "top-hat":
            if self.r is None or not 0 < self.r <= self.L / 2:
                raise ValueError(f"el radio debe cumplir 0 < r <= L/2 (r={self.r}, L={self.L})")

    @classmethod
    def top_hat(cls, r, L):
        return cls("top-hat", L=float(L), r=float(r))

    @classmethod
    def uniform(cls, L):
        return cls("uniform", L=float(L))

    @property
    def amplitude(self):
        # la amplitud sale de la normalización, nunca del usuario
        if self.variant == "top-hat":
            return self.L / (2.0 * self.r)
        return 1.0

    def phi(self, d):
        d = np.asarray(d, dtype=float)
        if self.variant == "top-hat":
            return np.where(d <= self.r, self.amplitude, 0.0)
        return np.ones_like(d)

    def to_dict(self):
        if self.variant == "top-hat":
            return {"variant": "top-hat", "r": self.r}
        return {"variant": "uniform"}


def torus_distance(a, b, L):
    """min(|a-b|, L-|a-b|), vectorizada."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    return np.minimum(d, L - d)


def wrap_positions(x, L):
    """Lleva posiciones reales a [0, L)."""
    y = np.mod(x, L)
    # np.mod(-1e-17, L) devuelve exactamente L
    return np.where(y >= L, 0.0, y)


@lru_cache(maxsize=1024)
def kernel_fourier_coefficient(kernel, k):
    """phi_k = (1/L) int_0^L phi(||x||) cos(2 pi k x / L) dx."""
    k = abs(int(k))
    if k == 0:
        return 1.0
    if kernel.variant == "uniform":
        return 0.0
    # np.sinc(z) = sin(pi z) / (pi z)
    return float(np.sinc(2.0 * k * kernel.r / kernel.L))


def g_prime(g, xi):
    return float(g.derivative(xi))


# ---------------------------------------------------------------------------
# Parámetros, estados
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    n: int
    L: float
    sigma: float
    dt: float
    g: GSpec
    kernel: KernelSpec
    averaging: str = "symmetric"
    steps: int = 0
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"N debe ser un entero >= 1 (N={self.n})")
        if not self.L > 0:
            raise ValueError(f"L debe ser positivo (L={self.L})")
        if not self.sigma >= 0:
            raise ValueError(f"sigma debe ser >= 0 (sigma={self.sigma})")
        if not self.dt > 0:
            raise ValueError(f"dt debe ser positivo (dt={self.dt})")
        if int(self.steps) != self.steps or self.steps < 0:
            raise ValueError(f"steps debe ser un entero >= 0 (steps={self.steps})")
        if self.averaging not in AVERAGING_MODES:
            raise ValueError(f"modo de promedio desconocido: {self.averaging!r}")
        if not 0 <= self.seed <= SEED_MASK:
            raise ValueError(f"la semilla debe caber en 64 bits (seed={self.seed})")
        if self.kernel.L != self.L:
            raise ValueError(f"el núcleo usa L={self.kernel.L} pero el modelo L={self.L}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "steps", int(self.steps))

    @classmethod
    def reference_setup(cls, n, sigma, h=6.0, steps=0, seed=0, averaging="symmetric", dt=0.1):
        """Toro L=10, núcleo top-hat r=1, G cúbica con parámetro h."""
        return cls(n=n, L=10.0, sigma=sigma, dt=dt, g=GSpec.cubic(h),
                   kernel=KernelSpec.top_hat(1.0, 10.0), averaging=averaging,
                   steps=steps, seed=seed)

    def to_dict(self):
        d = asdict(self)
        d["g"] = self.g.to_dict()
        d["kernel"] = self.kernel.to_dict()
        return d


@dataclass(frozen=True)
class SwarmState:
    x: np.ndarray
    u: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if x.ndim != 1 or x.shape != u.shape:
            raise ValueError(f"x y u deben ser vectores del mismo tamaño ({x.shape} vs {u.shape})")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)

    @property
    def n(self):
        return self.x.shape[0]

    def mirrored(self, L):
        """(x, u) -> (L - x, -u)."""
        return SwarmState(wrap_positions(L - self.x, L), -self.u, self.t)


@dataclass(frozen=True)
class StationaryState:
    """rho_xi(x, u) = (1/L) (pi sigma^2)^(-1/2) exp(-(u - xi)^2 / sigma^2)."""

    xi: float
    sigma: float
    L: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("los estados estacionarios requieren sigma > 0")

    def velocity_density(self, u):
        u = np.asarray(u, dtype=float)
        return np.exp(-((u - self.xi) ** 2) / self.sigma ** 2) / math.sqrt(math.pi * self.sigma ** 2)

    def density(self, x, u):
        _, u = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(u, dtype=float))
        return self.velocity_density(u) / self.L

    def velocity_mean(self):
        return self.xi

    def velocity_variance(self):
        return 0.5 * self.sigma ** 2


def compatibility_roots(g, bracket=(-10.0, 10.0), tol=ROOT_TOL, step=SCAN_STEP):
    """Raíces de xi = G(xi) en el intervalo, ordenadas y simétricas respecto a 0.

    Como G es impar solo se explora (0, R] con R = min(-lo, hi) y se refleja.
    """
    lo, hi = bracket
    if not lo < 0 < hi:
        raise RootBracketError(f"el intervalo {bracket} debe contener a 0 en su interior")
    reach = min(-lo, hi)
    if reach < step:
        raise RootBracketError(f"el intervalo {bracket} es más corto que el paso de búsqueda {step}")

    def residual(v):
        return float(v - g(v))

    grid = step * np.arange(1, int(reach / step) + 1)
    if grid[-1] < reach:
        grid = np.append(grid, reach)
    values = grid - g(grid)

    positive = []
    # raíz en (0, grid[0]): el residuo cambia de signo entre 0+ (pendiente 1 - G'(0)) y grid[0]
    slope = 1.0 - float(g.derivative(0.0))
    if slope * values[0] < 0:
        left = grid[0]
        for _ in range(200):
            left *= 0.5
            if residual(left) * values[0] < 0:
                break
        else:
            raise RootBracketError(f"no se pudo aislar la raíz en (0, {grid[0]})")
        positive.append(float(bisect(residual, left, grid[0], xtol=min(tol, left) * 1e-2, maxiter=2000)))

    for i in range(len(grid)):
        if values[i] == 0.0:
            positive.append(float(grid[i]))
            continue
        if i + 1 < len(grid) and values[i] * values[i + 1] < 0:
            root = bisect(residual, grid[i], grid[i + 1], xtol=tol * 1e-2, maxiter=500)
            if abs(residual(root)) > tol:
                raise RootBracketError(f"la bisección no alcanzó |xi - G(xi)| <= {tol} cerca de {root}")
            positive.append(float(root))

    logger.info("Raíces de compatibilidad positivas: %s", positive)
    return [-v for v in reversed(positive)] + [0.0] + positive


def stationary_states(g, sigma, L, bracket=(-10.0, 10.0), tol=ROOT_TOL):
    return [StationaryState(xi, sigma, L) for xi in compatibility_roots(g, bracket, tol)]


# ---------------------------------------------------------------------------
# Dinámica
# ---------------------------------------------------------------------------

def _neighbor_sums(state, params, method):
    kernel = params.kernel
    n = state.n
    if kernel.variant == "uniform":
        total = float(np.sum(state.u))
        return np.full(n, total), np.full(n, float(n))

    r, L = kernel.r, params.L
    if method == "cells":
        if r > L / 4:
            raise ValueError(f"la lista de celdas requiere r <= L/4 (r={r}, L={L})")
        use_cells = True
    elif method == "direct":
        use_cells = False
    elif method == "auto":
        use_cells = n >= CELL_LIST_MIN_AGENTS and r <= L / 4
    else:
        raise ValueError(f"método de vecinos desconocido: {method!r}")

    kernel_sums = cell_list_sums if use_cells else direct_sums
    return kernel_sums(state.x, state.u, float(L), float(r), float(kernel.amplitude))


def neighbor_average(state, params, method="auto"):
    """<u>_i con la regla de promedio de `params` (suma con j = i incluido)."""
    num, den = _neighbor_sums(state, params, method)
    if params.averaging == "symmetric":
        return num / params.n
    out = np.zeros_like(num)
    mask = den > 0
    out[mask] = num[mask] / den[mask]
    return out


def euler_step(state, params, rng):
    avg = neighbor_average(state, params)
    dw = rng.standard_normal(state.n) * math.sqrt(params.dt)
    x = wrap_positions(state.x + state.u * params.dt, params.L)
    u = state.u + (params.g(avg) - state.u) * params.dt + params.sigma * dw
    return SwarmState(x, u, state.t + params.dt)


def sample_initial(xi, params, rng):
    """Posiciones uniformes en [0, L), velocidades N(xi, sigma^2 / 2)."""
    x = wrap_positions(rng.uniform(0.0, params.L, params.n), params.L)
    u = xi + math.sqrt(0.5) * params.sigma * rng.standard_normal(params.n)
    return SwarmState(x, u, 0.0)


def simulate(params, init, observers=("mean_velocity", "discrepancy"), snapshot_every=None, rng=None):
    """Integra `params.steps` pasos de Euler y registra los observables pedidos.

    La velocidad media se registra siempre; la discrepancia y las posiciones
    solo si aparecen en `observers`.
    """
    unknown = set(observers) - set(OBSERVERS)
    if unknown:
        raise ValueError(f"observables desconocidos: {sorted(unknown)}")
    if init.n != params.n:
        raise ValueError(f"el estado inicial tiene {init.n} agentes y los parámetros N={params.n}")
    if np.any(init.x < 0) or np.any(init.x >= params.L):
        raise ValueError("las posiciones iniciales deben estar en [0, L)")
    if rng is None:
        rng = make_rng(params.seed)

    want_disc = "discrepancy" in observers
    want_pos = "positions" in observers
    every = snapshot_every or 1

    steps = params.steps
    times = np.empty(steps + 1)
    velocity = np.empty(steps + 1)
    discrepancy = np.empty(steps + 1) if want_disc else None
    snapshots = [] if want_pos else None

    state = init
    for n in range(steps + 1):
        if n > 0:
            state = euler_step(state, params, rng)
        times[n] = state.t
        velocity[n] = mean_velocity(state)
        if want_disc:
            discrepancy[n] = centered_l2_discrepancy(state.x, params.L)
        if want_pos and n % every == 0:
            snapshots.append((state.t, state.x.copy()))

    logger.info("Simulación terminada: N=%d, %d pasos, u_media final=%.4f", params.n, steps, velocity[-1])
    meta = {"params": params.to_dict(), "seed": params.seed}
    return RunSeries(times=times, mean_velocity=velocity, discrepancy=discrepancy,
                     position_snapshots=snapshots, meta=meta, final_state=state)
