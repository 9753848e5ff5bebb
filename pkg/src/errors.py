"""
Excepciones del simulador.
Cada clase lleva el código de salida que usa la CLI.
"""
from typing import Optional


class SimulationError(Exception):
    """Error base del simulador"""
    exit_code = 1


class ValidationError(SimulationError):
    """Un parámetro viola un invariante físico o de formato"""
    exit_code = 2

    def __init__(self, field: str, mensaje: str):
        self.field = field
        super().__init__(f"{field}: {mensaje}")


class ConfigParseError(SimulationError):
    """Documento de configuración mal formado"""
    exit_code = 2

    def __init__(self, mensaje: str, linea: Optional[int] = None, texto: str = ""):
        self.linea = linea
        self.texto = texto
        if linea is not None:
            mensaje = f"línea {linea}: {mensaje} -> {texto.strip()!r}"
        super().__init__(mensaje)


class UnphysicalRegimeError(SimulationError):
    """Las medidas implican una probabilidad o matriz no física"""
    exit_code = 3

    def __init__(self, cantidad: str, mensaje: str):
        self.cantidad = cantidad
        super().__init__(f"{cantidad}: {mensaje}")


class NumericalError(SimulationError):
    """Fallo numérico (paso demasiado grande, aceptación nula, ...)"""
    exit_code = 4
