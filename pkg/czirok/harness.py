"""Ejecución de experimentos: despacho por tipo, barridos paralelos
deterministas, presets de figuras y escritura de tablas de resultados."""

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from . import __version__
from ._rng import make_rng
from .config import ExperimentConfig, parse_config
from .errors import AllModesStableError, CzirokError, NoCoherentClusterError, NoOrderStateError
from .model import GSpec, ModelParams, compatibility_roots, sample_initial, simulate
from .stability import (ModeContext, critical_sigma, find_growth_roots, growth_curve,
                        most_unstable_mode, zeroth_mode_stable)
from .stats import (cluster_velocity, count_transitions, fluctuation_covariance_test,
                    periodic_kde, time_average)

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json", "xlsx")
FLOAT_FORMAT = "%.17g"
OK = "ok"


@dataclass
class ResultTable:
    frame: pd.DataFrame
    provenance: dict = field(default_factory=dict)

    @property
    def columns(self):
        return list(self.frame.columns)

    @property
    def failed_rows(self):
        if "status" not in self.frame:
            return 0
        return int((self.frame["status"] != OK).sum())

    def __len__(self):
        return len(self.frame)


# ---------------------------------------------------------------------------
# Semillas y utilidades
# ---------------------------------------------------------------------------

def config_hash(config):
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.blake2b(canonical.encode("utf-8"), digest_size=16).hexdigest()


def cell_seed(master, indices, replicate):
    """Semilla de 64 bits de una celda: solo depende de sus índices de eje."""
    key = f"{master}|{','.join(str(i) for i in indices)}|{replicate}"
    return int.from_bytes(hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest(), "little")


def order_velocity(g):
    """xi_e: menor raíz positiva con modo 0 estable."""
    for xi in compatibility_roots(g):
        if xi > 0 and zeroth_mode_stable(g, xi):
            return xi
    raise NoOrderStateError(f"G={g.to_dict()} no tiene estados de orden estables")


def _initial_velocity(init, g):
    return order_velocity(g) if init == "order" else 0.0


def _h_value(g):
    return g.h if g.variant == "cubic" else math.nan


def _provenance(config, **annotations):
    return {"config_hash": config_hash(config), "seed": config.params.seed,
            "version": __version__, "experiment": config.figure or config.kind,
            "annotations": annotations}


def _run_series(params, init):
    rng = make_rng(params.seed)
    start = sample_initial(_initial_velocity(init, params.g), params, rng)
    return simulate(params, start, observers=("mean_velocity", "discrepancy"), rng=rng)


# ---------------------------------------------------------------------------
# Experimentos
# ---------------------------------------------------------------------------

def _run_simulate(config, threads, progress):
    series = _run_series(config.params, config.init)
    return ResultTable(series.to_frame(), _provenance(config))


def _run_stability(config, threads, progress):
    p = config.params
    rows = []
    for xi in compatibility_roots(p.g):
        for k in range(1, config.k_range + 1):
            row = {"xi": xi, "g_prime": float(p.g.derivative(xi)),
                   "zeroth_stable": zeroth_mode_stable(p.g, xi), "k": k}
            try:
                ctx = ModeContext.from_model(p.g, xi, p.kernel, p.sigma, k)
                res = find_growth_roots(ctx)
                row.update(phik=ctx.phik, gamma_r=res.gamma_r, gamma_i=res.gamma_i,
                           n_roots=len(res.roots), sufficient_bound_ok=res.sufficient_bound_ok,
                           mode_status=res.status, status=OK)
            except (CzirokError, ValueError) as exc:
                logger.warning("Modo k=%d en xi=%.4f falló: %s", k, xi, exc)
                row.update(phik=math.nan, gamma_r=math.nan, gamma_i=math.nan, n_roots=0,
                           sufficient_bound_ok=False, mode_status="", status=type(exc).__name__)
            rows.append(row)

    annotations = {}
    try:
        xi_e = order_velocity(p.g)
        mode = most_unstable_mode(p.g, xi_e, p.kernel, p.sigma, config.k_range)
        annotations = {"k_max": mode.k_max, "cluster_velocity_predicted": mode.velocity}
    except (NoOrderStateError, AllModesStableError) as exc:
        annotations = {"most_unstable_mode": str(exc)}
    return ResultTable(pd.DataFrame(rows), _provenance(config, **annotations))


def _run_critical_sigma(config, threads, progress):
    p = config.params
    hs = config.axes_dict.get("h")
    gs = [GSpec.cubic(h) for h in hs] if hs else [p.g]
    rows = []
    for g in gs:
        row = {"h": _h_value(g), "xi_e": math.nan, "sigma_c": math.nan}
        try:
            row["xi_e"] = order_velocity(g)
            row["sigma_c"] = critical_sigma(g, row["xi_e"], p.kernel, config.k_range)
            row["status"] = OK
        except CzirokError as exc:
            logger.warning("Umbral para %s falló: %s", g.to_dict(), exc)
            row["status"] = type(exc).__name__
        rows.append(row)
    return ResultTable(pd.DataFrame(rows), _provenance(config))


def _sweep_cell(cell, config):
    indices, values, replicate = cell
    params = config.params
    seed = cell_seed(params.seed, indices, replicate)
    changes = {"seed": seed}
    if "n" in values:
        changes["n"] = int(values["n"])
    if "sigma" in values:
        changes["sigma"] = float(values["sigma"])
    if "h" in values:
        changes["g"] = GSpec.cubic(values["h"])
    params = replace(params, **changes)

    row = {"n": params.n, "sigma": params.sigma, "h": _h_value(params.g),
           "replicate": replicate, "seed": seed}
    try:
        xi_e = order_velocity(params.g)
        rng = make_rng(seed)
        start = sample_initial(_initial_velocity(config.init, params.g), params, rng)
        series = simulate(params, start, observers=("mean_velocity",), rng=rng)
        report = count_transitions(series, xi_e, config.detector.enter_frac, config.detector.exit_frac)
        row.update(transitions=report.count, mean_velocity=time_average(series),
                   abs_mean_velocity=float(np.mean(np.abs(series.mean_velocity))), status=OK)
    except CzirokError as exc:
        row.update(transitions=math.nan, mean_velocity=math.nan, abs_mean_velocity=math.nan,
                   status=type(exc).__name__)
    return row


def _sweep_cells(config):
    axes = config.axes
    names = [name for name, _ in axes]
    ranges = [range(len(values)) for _, values in axes]
    cells = []
    for indices in product(*ranges):
        values = {name: axes[a][1][i] for a, (name, i) in enumerate(zip(names, indices))}
        for rep in range(config.replicates):
            cells.append((indices, values, rep))
    return cells


def _run_sweep(config, threads, progress):
    cells = _sweep_cells(config)
    rows = Parallel(n_jobs=threads, prefer="threads")(
        delayed(_sweep_cell)(cell, config)
        for cell in tqdm(cells, desc=config.figure or config.kind, disable=not progress)
    )
    frame = pd.DataFrame(rows, columns=["n", "sigma", "h", "replicate", "seed", "transitions",
                                        "mean_velocity", "abs_mean_velocity", "status"])
    return ResultTable(frame, _provenance(config))


def sweep_medians(table):
    """Mediana del número de transiciones por combinación de ejes."""
    ok = table.frame[table.frame["status"] == OK]
    return ok.groupby(["n", "sigma", "h"], dropna=False)["transitions"].median().reset_index()


def _fluctuation_observables(L):
    return {
        "constant": lambda x, u: 1.0,
        "velocity": lambda x, u: u,
        "cosine": lambda x, u: np.cos(2.0 * np.pi * np.asarray(x) / L),
    }


def _run_fluctuation(config, threads, progress):
    p = config.params
    rows = []
    xi = _initial_velocity(config.init, p.g)
    for name, f in _fluctuation_observables(p.L).items():
        row = {"observable": name, "xi": xi}
        try:
            empirical, predicted, z = fluctuation_covariance_test(
                xi, p.sigma, p.L, f, f, p.n, config.replicates, seed=p.seed)
            row.update(empirical=empirical, predicted=predicted, z=z, status=OK)
        except CzirokError as exc:
            row.update(empirical=math.nan, predicted=math.nan, z=math.nan, status=type(exc).__name__)
        rows.append(row)
    return ResultTable(pd.DataFrame(rows), _provenance(config))


# ---------------------------------------------------------------------------
# Presets de figuras
# ---------------------------------------------------------------------------

_SIGMA_C_EXPECTED = {"5": 1.8, "6": 0.85, "8": 1.4, "10": 2.2}

FIGURE_PRESETS = {
    "fig1": {"kind": "growth", "hs": (5.0, 6.0, 8.0, 10.0),
             "sigmas": tuple(np.round(np.arange(0.25, 3.01, 0.25), 2)),
             "note": "sigma_c esperado por h: " + json.dumps(_SIGMA_C_EXPECTED)},
    "fig2": {"kind": "series", "n": 500, "sigmas": (2.0,), "hs": (2.0, 6.0), "init": "disorder",
             "note": "h=2: u_media cerca de 0; h=6: u_media tiende a +/- xi_e"},
    "fig3": {"kind": "series", "n": 2000, "sigmas": (0.5, 1.0, 1.5), "hs": (6.0,), "init": "order",
             "clusters": True,
             "note": "sigma=0.5: cluster móvil (velocidad ~3.6, predicha 3.4); sigma=1.5: estado de orden estable"},
    "fig4": {"kind": "series", "n": 2000, "sigmas": (0.5, 1.0, 1.5), "hs": (6.0,), "init": "disorder",
             "note": "sigma=0.5 y 1: u_media distinta de +/- xi_e; sigma=1.5: u_media = xi_e, posiciones uniformes"},
    "fig5": {"kind": "series", "n": 2000, "sigmas": (1.0,), "hs": (10.0,), "init": "order",
             "clusters": True, "note": "h=10, sigma=1: estado de orden inestable"},
    "fig6": {"kind": "series", "n": 2000, "sigmas": (1.0,), "hs": (5.0,), "init": "order",
             "clusters": True, "note": "h=5, sigma=1: estado de orden inestable"},
    "fig7": {"kind": "sweep", "n": 100, "sigma": 5.0, "h": 6.0, "axes": (("n", (80, 100, 120, 140)),),
             "note": "menos transiciones al aumentar N"},
    "fig8": {"kind": "sweep", "n": 100, "sigma": 5.0, "h": 6.0, "axes": (("sigma", (4.0, 4.5, 5.0, 5.5)),),
             "note": "más transiciones al aumentar sigma"},
    "fig9": {"kind": "sweep", "n": 100, "sigma": 5.0, "h": 6.0, "axes": (("h", (5.0, 5.5, 6.0, 6.5)),),
             "note": "menos transiciones al aumentar h"},
}

SNAPSHOT_EVERY = 1


def figure_config(fig_id, seed=0, steps=None, replicates=None):
    """ExperimentConfig de un preset (dt=0.1, L=10, top-hat r=1)."""
    config = parse_config({"experiment": {"kind": "figure", "figure": fig_id}})
    preset = FIGURE_PRESETS[fig_id]
    long_run = preset["kind"] == "sweep"
    params = ModelParams.reference_setup(
        n=preset.get("n", 1), sigma=preset.get("sigma", preset.get("sigmas", (1.0,))[0]),
        h=preset.get("h", preset.get("hs", (6.0,))[0]),
        steps=steps if steps is not None else (100_000 if long_run else 2000), seed=seed)
    return replace(config, params=params, axes=preset.get("axes", ()), init=preset.get("init", "disorder"),
                   replicates=replicates if replicates is not None else 20)


def _figure_growth(config, preset, threads, progress):
    p = config.params
    rows = []
    for h in preset["hs"]:
        g = GSpec.cubic(h)
        try:
            xi_e = order_velocity(g)
            curve = growth_curve(g, xi_e, p.kernel, preset["sigmas"], k=1)
        except CzirokError as exc:
            logger.warning("Curva de crecimiento para h=%g falló: %s", h, exc)
            rows.extend({"h": h, "sigma": float(s), "gamma_r": math.nan, "gamma_i": math.nan,
                         "well_depth": math.nan, "mode_status": "", "status": type(exc).__name__}
                        for s in preset["sigmas"])
            continue
        depth = float(-g.potential(xi_e))
        for sigma, res in zip(preset["sigmas"], curve):
            rows.append({"h": h, "sigma": float(sigma), "gamma_r": res.gamma_r, "gamma_i": res.gamma_i,
                         "well_depth": depth, "mode_status": res.status, "status": OK})
    return ResultTable(pd.DataFrame(rows), _provenance(config, expected=preset["note"]))


def _figure_series(config, preset, threads, progress):
    base = config.params
    frames = []
    annotations = {"expected": preset["note"]}
    kde = config.kde
    runs = [(s, h) for h in preset["hs"] for s in preset["sigmas"]]
    for sigma, h in tqdm(runs, desc=config.figure, disable=not progress):
        params = replace(base, n=preset["n"], sigma=sigma, g=GSpec.cubic(h))
        rng = make_rng(params.seed)
        start = sample_initial(_initial_velocity(preset["init"], params.g), params, rng)
        observers = ("mean_velocity", "discrepancy") + (("positions",) if preset.get("clusters") else ())
        series = simulate(params, start, observers=observers, snapshot_every=SNAPSHOT_EVERY, rng=rng)
        frame = series.to_frame()
        frame.insert(0, "h", h)
        frame.insert(0, "sigma", sigma)
        frames.append(frame)

        if preset.get("clusters"):
            tag = f"sigma={sigma:g},h={h:g}"
            snaps = series.position_snapshots
            tracks = {"cluster_velocity": (snaps, "phase"),
                      "cluster_velocity_peak": (snaps[len(snaps) // 2:], "peak")}
            for key, (window, method) in tracks.items():
                try:
                    annotations[f"{key}[{tag}]"] = cluster_velocity(window, params.L, kde.bandwidth,
                                                                    kde.grid, method=method)
                except (NoCoherentClusterError, ValueError) as exc:
                    annotations[f"{key}[{tag}]"] = str(exc)
            density = periodic_kde(snaps[-1][1], params.L, kde.bandwidth, kde.grid)
            annotations[f"kde_peak_to_mean[{tag}]"] = float(density.max() * params.L)
    return ResultTable(pd.concat(frames, ignore_index=True), _provenance(config, **annotations))


def _figure_sweep(config, preset, threads, progress):
    table = _run_sweep(config, threads, progress)
    table.provenance["annotations"]["expected"] = preset["note"]
    return table


_FIGURE_RUNNERS = {"growth": _figure_growth, "series": _figure_series, "sweep": _figure_sweep}


def _run_figure(config, threads, progress):
    preset = FIGURE_PRESETS[config.figure]
    return _FIGURE_RUNNERS[preset["kind"]](config, preset, threads, progress)


_RUNNERS = {
    "simulate": _run_simulate,
    "stability": _run_stability,
    "critical-sigma": _run_critical_sigma,
    "sweep": _run_sweep,
    "transitions": _run_sweep,
    "fluctuation": _run_fluctuation,
    "figure": _run_figure,
}


def run_config(config: ExperimentConfig, threads=1, progress=False) -> ResultTable:
    if threads < 1:
        raise ValueError(f"threads debe ser >= 1 ({threads})")
    logger.info("Ejecutando %s (semilla %d)", config.figure or config.kind, config.params.seed)
    table = _RUNNERS[config.kind](config, threads, progress)
    if table.failed_rows:
        logger.warning("%d filas con error numérico", table.failed_rows)
    return table


# ---------------------------------------------------------------------------
# Escritura
# ---------------------------------------------------------------------------

def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return None if math.isnan(value) else float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def _write_csv(table, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in table.provenance.items():
            fh.write(f"# {key}: {json.dumps(value, sort_keys=True, ensure_ascii=False)}\n")
        table.frame.to_csv(fh, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def _write_json(table, path):
    payload = {"provenance": table.provenance,
               "columns": {c: [_jsonable(v) for v in table.frame[c].tolist()] for c in table.columns}}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=False, ensure_ascii=False, indent=1)
        fh.write("\n")


def _write_xlsx(table, path):
    prov = pd.DataFrame({"clave": list(table.provenance),
                         "valor": [json.dumps(v, sort_keys=True, ensure_ascii=False)
                                   for v in table.provenance.values()]})
    with pd.ExcelWriter(path, engine="openpyxl") as writer:
        table.frame.to_excel(writer, sheet_name="datos", index=False)
        prov.to_excel(writer, sheet_name="provenance", index=False)


_WRITERS = {"csv": _write_csv, "json": _write_json, "xlsx": _write_xlsx}


def emit(table, fmt, path):
    if fmt not in FORMATS:
        raise ValueError(f"formato desconocido: {fmt!r} (se admiten {list(FORMATS)})")
    folder = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(folder, exist_ok=True)
        _WRITERS[fmt](table, path)
    except OSError as exc:
        raise OSError(f"No se pudo escribir {path}: {exc}") from exc
    logger.info("Tabla escrita en %s", path)
