"""Excepciones del paquete czirok."""


class CzirokError(Exception):
    """Error base de todas las operaciones del paquete."""


class ConfigError(CzirokError, ValueError):
    """Configuración inválida. `field` es la ruta del campo (p. ej. 'model.kernel.r')."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class RootBracketError(CzirokError):
    """No se pudieron establecer intervalos de bisección para ξ = G(ξ)."""


class QuadratureError(CzirokError):
    """La cuadratura no alcanzó la tolerancia pedida."""


class GridExhaustedError(CzirokError):
    """Ningún punto de arranque de Newton convergió."""


class AllModesStableError(CzirokError):
    """Todos los modos 1..k_range son estables."""


class NoSignChangeError(CzirokError):
    """El predicado de estabilidad no cambia de signo en el intervalo de σ."""


class SaturationError(CzirokError):
    """Desborde o subdesborde al integrar la ecuación de Volterra."""


class NoCoherentClusterError(CzirokError):
    """La densidad de posiciones no muestra un cluster coherente."""


class NoOrderStateError(CzirokError):
    """G no tiene raíz de compatibilidad positiva (no hay estados de orden)."""
