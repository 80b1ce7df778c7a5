"""Lectura y validación de la configuración JSON de un experimento.

    {"model": {"n", "l", "sigma", "dt", "steps", "seed",
               "g": {"variant", "h" | "a" | "coeffs"},
               "kernel": {"variant", "r"}, "averaging"},
     "experiment": {"kind", "figure", "axes", "replicates", "init", "k_range",
                    "detector": {"enter_frac", "exit_frac"},
                    "kde": {"bandwidth", "grid"}}}

Todo error se reporta como ConfigError con la ruta del campo.
"""

import json
from dataclasses import dataclass, field, replace

from ._rng import SEED_MASK
from .errors import ConfigError
from .model import AVERAGING_MODES, G_VARIANTS, KERNEL_VARIANTS, GSpec, KernelSpec, ModelParams

EXPERIMENTS = ("simulate", "stability", "critical-sigma", "sweep", "transitions", "fluctuation", "figure")
FIGURES = tuple(f"fig{i}" for i in range(1, 10))
SWEEP_AXES = ("n", "sigma", "h")
INIT_MODES = ("disorder", "order")

DEFAULT_STEPS = 2000
DEFAULT_TRANSITION_STEPS = 100_000
DEFAULT_REPLICATES = 20

_MODEL_KEYS = {"n", "l", "sigma", "dt", "steps", "seed", "g", "kernel", "averaging"}
_EXPERIMENT_KEYS = {"kind", "figure", "axes", "replicates", "init", "k_range", "detector", "kde"}


@dataclass(frozen=True)
class DetectorConfig:
    enter_frac: float = 0.8
    exit_frac: float = 0.2


@dataclass(frozen=True)
class KdeConfig:
    bandwidth: float = None     # None -> L / 20
    grid: int = 256


@dataclass(frozen=True)
class ExperimentConfig:
    params: ModelParams
    kind: str
    figure: str = None
    axes: tuple = ()            # ((nombre, (valores, ...)), ...)
    replicates: int = DEFAULT_REPLICATES
    init: str = "disorder"
    k_range: int = 8
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    kde: KdeConfig = field(default_factory=KdeConfig)
    out: str = None

    @property
    def axes_dict(self):
        return {name: list(values) for name, values in self.axes}

    def with_overrides(self, seed=None, out=None):
        config = self
        if seed is not None:
            if not 0 <= seed <= SEED_MASK:
                raise ConfigError("model.seed", "debe caber en 64 bits sin signo")
            config = replace(config, params=replace(config.params, seed=int(seed)))
        if out is not None:
            config = replace(config, out=out)
        return config

    def to_dict(self):
        """Forma canónica (con valores por defecto aplicados) usada para el hash."""
        p = self.params
        return {
            "model": {"n": p.n, "l": p.L, "sigma": p.sigma, "dt": p.dt, "steps": p.steps,
                      "seed": p.seed, "g": p.g.to_dict(), "kernel": p.kernel.to_dict(),
                      "averaging": p.averaging},
            "experiment": {"kind": self.kind, "figure": self.figure, "axes": self.axes_dict,
                           "replicates": self.replicates, "init": self.init, "k_range": self.k_range,
                           "detector": {"enter_frac": self.detector.enter_frac,
                                        "exit_frac": self.detector.exit_frac},
                           "kde": {"bandwidth": self.kde.bandwidth, "grid": self.kde.grid}},
        }


# ---------------------------------------------------------------------------
# Helpers de validación
# ---------------------------------------------------------------------------

def _section(data, key, path, allowed):
    value = data.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(path, "debe ser un objeto JSON")
    unknown = sorted(set(value) - allowed)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}", "clave desconocida")
    return value


def _number(data, key, path, default=None, integer=False, minimum=None, strict=False):
    if key not in data:
        if default is None:
            raise ConfigError(path, "campo obligatorio")
        return default
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"se esperaba un número, no {value!r}")
    if integer:
        if int(value) != value:
            raise ConfigError(path, f"se esperaba un entero, no {value!r}")
        value = int(value)
    else:
        value = float(value)
    if minimum is not None and (value <= minimum if strict else value < minimum):
        raise ConfigError(path, f"debe ser {'>' if strict else '>='} {minimum} (valor {value})")
    return value


def _choice(data, key, path, choices, default):
    value = data.get(key, default)
    if value not in choices:
        raise ConfigError(path, f"{value!r} no es una de {list(choices)}")
    return value


def _parse_g(model):
    g = _section(model, "g", "model.g", {"variant", "h", "a", "coeffs"})
    variant = _choice(g, "variant", "model.g.variant", G_VARIANTS, "cubic")
    if variant == "cubic":
        return GSpec.cubic(_number(g, "h", "model.g.h", default=6.0))
    if variant == "tanh":
        return GSpec.tanh(_number(g, "a", "model.g.a"))
    coeffs = g.get("coeffs")
    if not isinstance(coeffs, list) or not coeffs:
        raise ConfigError("model.g.coeffs", "se esperaba una lista no vacía de coeficientes")
    for i, c in enumerate(coeffs):
        if isinstance(c, bool) or not isinstance(c, (int, float)):
            raise ConfigError(f"model.g.coeffs[{i}]", f"se esperaba un número, no {c!r}")
    return GSpec.odd_polynomial(coeffs)


def _parse_kernel(model, L):
    kernel = _section(model, "kernel", "model.kernel", {"variant", "r"})
    variant = _choice(kernel, "variant", "model.kernel.variant", KERNEL_VARIANTS, "top-hat")
    if variant == "uniform":
        return KernelSpec.uniform(L)
    r = _number(kernel, "r", "model.kernel.r", default=1.0, minimum=0.0, strict=True)
    if r > L / 2:
        raise ConfigError("model.kernel.r", f"debe cumplir r <= L/2 (r={r}, L={L})")
    return KernelSpec.top_hat(r, L)


def _parse_axes(experiment, g):
    axes = experiment.get("axes", {})
    if not isinstance(axes, dict):
        raise ConfigError("experiment.axes", "debe ser un objeto {eje: [valores]}")
    parsed = []
    for name in SWEEP_AXES:
        if name not in axes:
            continue
        path = f"experiment.axes.{name}"
        values = axes[name]
        if not isinstance(values, list) or not values:
            raise ConfigError(path, "se esperaba una lista no vacía")
        holder = {str(i): v for i, v in enumerate(values)}
        checked = tuple(_number(holder, str(i), f"{path}[{i}]", integer=(name == "n"),
                                minimum=1 if name == "n" else 0.0, strict=(name == "sigma"))
                        for i in range(len(values)))
        parsed.append((name, checked))
    unknown = sorted(set(axes) - set(SWEEP_AXES))
    if unknown:
        raise ConfigError(f"experiment.axes.{unknown[0]}", f"eje desconocido; se admiten {list(SWEEP_AXES)}")
    if any(name == "h" for name, _ in parsed) and g.variant != "cubic":
        raise ConfigError("experiment.axes.h", "el eje h requiere la variante cúbica de G")
    return tuple(parsed)


# ---------------------------------------------------------------------------
# API
# ---------------------------------------------------------------------------

def parse_config(data, kind=None):
    """Construye un ExperimentConfig a partir del dict JSON.

    `kind` (p. ej. el subcomando de la CLI) tiene prioridad sobre experiment.kind.
    """
    if not isinstance(data, dict):
        raise ConfigError("<raíz>", "la configuración debe ser un objeto JSON")
    unknown = sorted(set(data) - {"model", "experiment"})
    if unknown:
        raise ConfigError(unknown[0], "clave desconocida")
    model = _section(data, "model", "model", _MODEL_KEYS)
    experiment = _section(data, "experiment", "experiment", _EXPERIMENT_KEYS)

    kind = kind or experiment.get("kind", "simulate")
    if kind not in EXPERIMENTS:
        raise ConfigError("experiment.kind", f"{kind!r} no es uno de {list(EXPERIMENTS)}")
    figure = experiment.get("figure")
    if kind == "figure" and figure not in FIGURES:
        raise ConfigError("experiment.figure", f"{figure!r} no es uno de {list(FIGURES)}")

    L = _number(model, "l", "model.l", default=10.0, minimum=0.0, strict=True)
    long_run = kind in ("sweep", "transitions")
    g = _parse_g(model)
    kernel = _parse_kernel(model, L)
    seed = _number(model, "seed", "model.seed", default=0, integer=True, minimum=0)
    if seed > SEED_MASK:
        raise ConfigError("model.seed", "debe caber en 64 bits sin signo")

    params = ModelParams(
        n=_number(model, "n", "model.n", default=None if kind != "figure" else 1, integer=True, minimum=1),
        L=L,
        sigma=_number(model, "sigma", "model.sigma", default=None if kind != "figure" else 1.0, minimum=0.0),
        dt=_number(model, "dt", "model.dt", default=0.1, minimum=0.0, strict=True),
        g=g,
        kernel=kernel,
        averaging=_choice(model, "averaging", "model.averaging", AVERAGING_MODES, "symmetric"),
        steps=_number(model, "steps", "model.steps",
                      default=DEFAULT_TRANSITION_STEPS if long_run else DEFAULT_STEPS,
                      integer=True, minimum=0),
        seed=seed,
    )

    detector = _section(experiment, "detector", "experiment.detector", {"enter_frac", "exit_frac"})
    enter = _number(detector, "enter_frac", "experiment.detector.enter_frac", default=0.8)
    leave = _number(detector, "exit_frac", "experiment.detector.exit_frac", default=0.2)
    if not 0 < leave < enter <= 1:
        raise ConfigError("experiment.detector", f"se requiere 0 < exit_frac < enter_frac <= 1 ({leave}, {enter})")

    kde = _section(experiment, "kde", "experiment.kde", {"bandwidth", "grid"})
    bandwidth = kde.get("bandwidth")
    if bandwidth is not None:
        bandwidth = _number(kde, "bandwidth", "experiment.kde.bandwidth", minimum=0.0, strict=True)
    grid = _number(kde, "grid", "experiment.kde.grid", default=256, integer=True, minimum=16)

    axes = _parse_axes(experiment, g)
    if kind == "sweep" and not axes:
        raise ConfigError("experiment.axes", "un barrido necesita al menos un eje")

    replicates = _number(experiment, "replicates", "experiment.replicates",
                         default=DEFAULT_REPLICATES, integer=True, minimum=1)
    if kind == "fluctuation":
        if params.n < 1000:
            raise ConfigError("model.n", "la prueba de fluctuaciones requiere N >= 1000")
        if replicates < 1000:
            raise ConfigError("experiment.replicates", "la prueba de fluctuaciones requiere >= 1000 réplicas")
        if params.sigma <= 0:
            raise ConfigError("model.sigma", "la prueba de fluctuaciones requiere sigma > 0")

    return ExperimentConfig(
        params=params,
        kind=kind,
        figure=figure if kind == "figure" else None,
        axes=axes,
        replicates=replicates,
        init=_choice(experiment, "init", "experiment.init", INIT_MODES, "disorder"),
        k_range=_number(experiment, "k_range", "experiment.k_range", default=8, integer=True, minimum=1),
        detector=DetectorConfig(enter, leave),
        kde=KdeConfig(bandwidth, grid),
    )


def load_config(path, kind=None):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("<archivo>", f"JSON inválido en {path}: {exc}") from exc
    except OSError as exc:
        raise OSError(f"No se pudo leer la configuración {path}: {exc}") from exc
    return parse_config(data, kind=kind)
