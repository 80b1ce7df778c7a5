"""Observables y pruebas estadísticas: velocidad media, discrepancia L2
centrada, KDE periódica, velocidad de clusters, transiciones entre estados
de orden y covarianza de fluctuaciones en t = 0.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import fft
from scipy.integrate import IntegrationWarning, dblquad
from scipy.stats import linregress

from ._rng import make_rng
from .errors import NoCoherentClusterError, QuadratureError

logger = logging.getLogger(__name__)

DEFAULT_KDE_GRID = 256
PEAK_TO_MEAN_MIN = 1.5


@dataclass
class RunSeries:
    times: np.ndarray
    mean_velocity: np.ndarray
    discrepancy: np.ndarray = None
    position_snapshots: list = None
    meta: dict = field(default_factory=dict)
    final_state: object = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.mean_velocity = np.asarray(self.mean_velocity, dtype=float)
        if self.mean_velocity.shape != self.times.shape:
            raise ValueError("times y mean_velocity deben tener la misma longitud")
        if self.discrepancy is not None:
            self.discrepancy = np.asarray(self.discrepancy, dtype=float)
            if self.discrepancy.shape != self.times.shape:
                raise ValueError("times y discrepancy deben tener la misma longitud")

    def __len__(self):
        return len(self.times)

    def to_frame(self):
        df = pd.DataFrame({"step": np.arange(len(self.times)), "t": self.times,
                           "mean_velocity": self.mean_velocity})
        if self.discrepancy is not None:
            df["discrepancy"] = self.discrepancy
        return df


@dataclass
class TransitionReport:
    count: int
    events: list
    exit_times: list
    xi_e: float
    enter_frac: float
    exit_frac: float


def mean_velocity(state):
    return float(np.mean(state.u))


def time_average(series, name="mean_velocity", last=None):
    values = getattr(series, name)
    if values is None:
        raise ValueError(f"la serie no registró {name!r}")
    if last is not None:
        values = values[-last:]
    return float(np.mean(values))


# ---------------------------------------------------------------------------
# Discrepancia L2 centrada
# ---------------------------------------------------------------------------

def centered_l2_discrepancy_direct(positions, L):
    """Forma cerrada con la doble suma explícita, O(N^2)."""
    z = np.asarray(positions, dtype=float) / L
    n = z.shape[0]
    a = np.abs(z - 0.5)
    single = np.sum(2.0 + a - a ** 2) / n
    pair = np.sum(2.0 + a[:, None] + a[None, :] - np.abs(z[:, None] - z[None, :])) / (2.0 * n ** 2)
    return max(13.0 / 12.0 - single + pair, 0.0)


def centered_l2_discrepancy(positions, L):
    """CL_2^2 en O(N log N).

    La forma cerrada se reduce a 1/12 + mean((z - 1/2)^2) - S / (2 N^2), con
    S = sum_{i,j} |z_i - z_j| calculada sobre las posiciones ordenadas.
    """
    z = np.sort(np.asarray(positions, dtype=float) / L)
    n = z.shape[0]
    if n == 0:
        raise ValueError("se necesita al menos una posición")
    weights = 2.0 * np.arange(n) - (n - 1)
    pair_sum = 2.0 * np.dot(weights, z)
    value = 1.0 / 12.0 + np.mean((z - 0.5) ** 2) - pair_sum / (2.0 * n * n)
    return max(float(value), 0.0)


def uniform_discrepancy_mean(n):
    """Media de CL_2^2 para N posiciones i.i.d. uniformes: (5/4 - 13/12) / N."""
    if n < 1:
        raise ValueError(f"N debe ser >= 1 (N={n})")
    return (5.0 / 4.0 - 13.0 / 12.0) / n


# ---------------------------------------------------------------------------
# KDE periódica y velocidad de clusters
# ---------------------------------------------------------------------------

def kde_grid(L, grid=DEFAULT_KDE_GRID):
    return L * np.arange(grid) / grid


def periodic_kde(positions, L, bandwidth=None, grid=DEFAULT_KDE_GRID):
    """Densidad con núcleo gaussiano envuelto sobre la malla j L / grid.

    Cada posición se reparte linealmente entre los dos nodos vecinos y los
    pesos se convolucionan (FFT circular) con el núcleo envuelto,
    normalizado para que la suma por dx dé 1.
    """
    if bandwidth is None:
        bandwidth = L / 20.0
    if not bandwidth > 0:
        raise ValueError(f"el ancho de banda debe ser positivo ({bandwidth})")
    if grid < 16:
        raise ValueError(f"la malla debe tener al menos 16 puntos ({grid})")
    x = np.asarray(positions, dtype=float)
    if x.size == 0:
        raise ValueError("se necesita al menos una posición")

    dx = L / grid
    cell = x / dx
    left = np.floor(cell)
    frac = cell - left
    left = left.astype(np.int64) % grid
    weights = (np.bincount(left, weights=1.0 - frac, minlength=grid)
               + np.bincount((left + 1) % grid, weights=frac, minlength=grid)) / x.size

    offsets = dx * np.arange(grid)
    images = int(math.ceil(8.0 * bandwidth / L)) + 1
    shifts = L * np.arange(-images, images + 1)
    kern = np.exp(-0.5 * ((offsets[:, None] + shifts[None, :]) / bandwidth) ** 2).sum(axis=1)
    kern /= kern.sum() * dx

    density = fft.irfft(fft.rfft(weights) * fft.rfft(kern), n=grid)
    return np.maximum(density, 0.0)


CLUSTER_METHODS = ("phase", "peak")


def fourier_phase_track(snapshots, L, k=1):
    """Posición L arg(c_k) / (2 pi k) y amplitud |c_k| de c_k = mean(exp(2 pi i k x / L))."""
    coeffs = np.array([np.mean(np.exp(2j * np.pi * k * np.asarray(x, dtype=float) / L))
                       for _, x in snapshots])
    positions = np.mod(np.angle(coeffs) * L / (2.0 * np.pi * k), L / k)
    return positions, np.abs(coeffs)


def _unwrap(track, period):
    unwrapped = np.empty_like(track)
    unwrapped[0] = track[0]
    for n in range(1, len(track)):
        # imagen periódica más cercana al punto anterior
        unwrapped[n] = track[n] + period * np.round((unwrapped[n - 1] - track[n]) / period)
    return unwrapped


def cluster_velocity(snapshots, L, bandwidth=None, grid=DEFAULT_KDE_GRID, method="phase"):
    """Velocidad aparente del cluster: pendiente por mínimos cuadrados de su
    posición desenvuelta a través del borde periódico.

    method="phase" sigue la fase del primer coeficiente de Fourier de las
    posiciones (velocidad de fase); solo entran las instantáneas con
    |c_1| >= 3 / sqrt(N). method="peak" sigue el máximo de la KDE y exige
    pico/media >= 1.5 en la mayoría de las instantáneas. Conviene muestrear
    en cada paso: el desenvuelto supone desplazamientos < L/2 entre
    instantáneas.
    """
    if method not in CLUSTER_METHODS:
        raise ValueError(f"método desconocido {method!r} (se admiten {list(CLUSTER_METHODS)})")
    if len(snapshots) < 10:
        raise ValueError(f"se necesitan al menos 10 instantáneas ({len(snapshots)})")
    times = np.array([t for t, _ in snapshots], dtype=float)
    if times[-1] - times[0] < 5.0:
        raise ValueError("las instantáneas deben cubrir al menos 5 unidades de tiempo")

    if method == "phase":
        track, amplitude = fourier_phase_track(snapshots, L)
        floor = np.array([3.0 / math.sqrt(len(x)) for _, x in snapshots])
        coherent = amplitude >= floor
        kept = times[coherent]
        if kept.size < 10 or kept[-1] - kept[0] < 5.0:
            raise NoCoherentClusterError(
                f"solo {kept.size} de {len(snapshots)} instantáneas con |c_1| sobre el nivel de ruido")
        return float(linregress(kept, _unwrap(track[coherent], L)).slope)

    dx = L / grid
    peaks = np.empty(len(snapshots))
    incoherent = 0
    for n, (_, positions) in enumerate(snapshots):
        density = periodic_kde(positions, L, bandwidth, grid)
        peaks[n] = dx * np.argmax(density)
        if density.max() * L < PEAK_TO_MEAN_MIN:
            incoherent += 1
    if incoherent > len(snapshots) / 2:
        raise NoCoherentClusterError(
            f"{incoherent} de {len(snapshots)} instantáneas sin pico (pico/media < {PEAK_TO_MEAN_MIN})")
    return float(linregress(times, _unwrap(peaks, L)).slope)


# ---------------------------------------------------------------------------
# Transiciones entre estados de orden
# ---------------------------------------------------------------------------

def count_transitions(series, xi_e, enter_frac=0.8, exit_frac=0.2):
    """Detector con histéresis sobre la velocidad media.

    Se ocupa el estado s = +/-1 al cruzar s * enter_frac * xi_e; se abandona
    al cruzar -s * exit_frac * xi_e. Una transición es un cambio del estado
    ocupado.
    """
    if not 0 < exit_frac < enter_frac <= 1:
        raise ValueError(f"se requiere 0 < exit_frac < enter_frac <= 1 ({exit_frac}, {enter_frac})")
    xi_e = abs(float(xi_e))
    if xi_e == 0:
        raise ValueError("xi_e debe ser distinto de cero")
    enter, leave = enter_frac * xi_e, exit_frac * xi_e

    occupied = 0
    inside = False
    events, exit_times = [], []
    for t, v in zip(series.times, series.mean_velocity):
        if inside and occupied * v <= -leave:
            inside = False
            exit_times.append(float(t))
        if v >= enter:
            target = 1
        elif v <= -enter:
            target = -1
        else:
            continue
        if occupied and target != occupied:
            events.append((float(t), occupied, target))
        occupied = target
        inside = True

    return TransitionReport(count=len(events), events=events, exit_times=exit_times,
                            xi_e=xi_e, enter_frac=enter_frac, exit_frac=exit_frac)


# ---------------------------------------------------------------------------
# Fluctuaciones en t = 0
# ---------------------------------------------------------------------------

def _stationary_mean(f, xi, sigma, L):
    """<rho_xi, f> por cuadratura doble; u en xi +/- 12 sigma."""
    norm = 1.0 / (L * math.sqrt(math.pi * sigma ** 2))

    def integrand(u, x):
        return float(f(x, u)) * math.exp(-((u - xi) ** 2) / sigma ** 2) * norm

    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, err = dblquad(integrand, 0.0, L, xi - 12.0 * sigma, xi + 12.0 * sigma,
                                 epsabs=1e-10, epsrel=1e-10)
        except IntegrationWarning as exc:
            raise QuadratureError(f"la cuadratura no convergió: {exc}") from exc
    if err > 1e-6:
        raise QuadratureError(f"error de cuadratura {err:.2e} demasiado grande")
    return value


def _empirical_mean(f, x, u):
    return float(np.mean(np.broadcast_to(f(x, u), x.shape)))


def fluctuation_covariance_test(xi, sigma, L, f1, f2, n, replicates, seed=0):
    """Covarianza empírica de sqrt(N)(<mu_N, f> - <rho_xi, f>) contra la predicha.

    Devuelve (empírica, predicha, z).
    """
    if n < 1000 or replicates < 1000:
        raise ValueError(f"se requieren N >= 1000 y al menos 1000 réplicas (N={n}, réplicas={replicates})")
    if not sigma > 0:
        raise ValueError("sigma debe ser positivo")

    m1 = _stationary_mean(f1, xi, sigma, L)
    m2 = _stationary_mean(f2, xi, sigma, L)
    m12 = _stationary_mean(lambda x, u: f1(x, u) * f2(x, u), xi, sigma, L)
    predicted = m12 - m1 * m2

    scale = math.sqrt(n)
    y1 = np.empty(replicates)
    y2 = np.empty(replicates)
    for r in range(replicates):
        rng = make_rng(seed, r)
        x = rng.uniform(0.0, L, n)
        u = xi + math.sqrt(0.5) * sigma * rng.standard_normal(n)
        y1[r] = scale * (_empirical_mean(f1, x, u) - m1)
        y2[r] = scale * (_empirical_mean(f2, x, u) - m2)

    prod = (y1 - y1.mean()) * (y2 - y2.mean())
    empirical = float(np.sum(prod) / (replicates - 1))
    se = float(np.std(prod, ddof=1) / math.sqrt(replicates))
    diff = empirical - predicted
    if se > 1e-12:
        z = diff / se
    else:
        # observable degenerado (p. ej. f constante): no hay dispersión
        z = 0.0 if abs(diff) < 1e-8 else math.copysign(math.inf, diff)
    logger.info("Covarianza empírica %.5g, predicha %.5g, z=%.3f", empirical, predicted, z)
    return empirical, predicted, z
