# 01_run_presets.py
import os
import sys

from czirok.errors import CzirokError
from czirok.harness import FIGURE_PRESETS, emit, figure_config, run_config

# Obtener la ruta absoluta de la carpeta donde se encuentra este script
BASE_DIR = os.path.dirname(os.path.abspath(__file__))
RESULTS_FOLDER = os.path.join(BASE_DIR, "results")

# Crear la carpeta "results" si no existe
os.makedirs(RESULTS_FOLDER, exist_ok=True)


def run_presets(figures, seed=0, threads=1):
    """Ejecuta los presets indicados y guarda cada tabla como CSV y XLSX."""
    failures = 0
    for fig_id in figures:
        try:
            table = run_config(figure_config(fig_id, seed=seed), threads=threads, progress=True)
        except CzirokError as e:
            print(f"❌ Error al ejecutar {fig_id}: {e}")
            failures += 1
            continue

        for fmt in ("csv", "xlsx"):
            output_file = os.path.join(RESULTS_FOLDER, f"{fig_id}.{fmt}")
            emit(table, fmt, output_file)
        if table.failed_rows:
            print(f"⚠️ {fig_id}: {table.failed_rows} filas con error numérico.")
            failures += 1
        else:
            print(f"✅ {fig_id} procesado y guardado en {RESULTS_FOLDER}.")
    return failures


if __name__ == "__main__":
    # Presets pedidos en la línea de comandos, o todos
    selected = sys.argv[1:] or list(FIGURE_PRESETS)
    threads = int(os.environ.get("CZIROK_THREADS", "1"))
    sys.exit(1 if run_presets(selected, threads=threads) else 0)
