"""
Configuración del simulador
"""
import os

from dotenv import load_dotenv

load_dotenv()


class Config:
    """Configuración base"""
    # Directorio raíz de las ejecuciones (cada una en <timestamp>-<seed>/)
    OUTPUT_DIR = os.environ.get('SIM_OUTPUT_DIR', 'runs')

    SEED = int(os.environ.get('SIM_SEED', 1234))

    # Monte Carlo de concurrencia
    CONCURRENCE_SAMPLES = int(os.environ.get('SIM_CONCURRENCE_SAMPLES', 100_000))
    BATCH_SIZE = int(os.environ.get('SIM_BATCH_SIZE', 50_000))

    HISTOGRAM_BINS = int(os.environ.get('SIM_HISTOGRAM_BINS', 64))

    SHOW_PROGRESS = True


class DevelopmentConfig(Config):
    """Configuración de desarrollo"""
    CONCURRENCE_SAMPLES = int(os.environ.get('SIM_CONCURRENCE_SAMPLES', 20_000))


class ProductionConfig(Config):
    """Configuración de producción"""
    pass


class TestingConfig(Config):
    """Configuración para los tests: muestreos pequeños y sin barras de progreso"""
    CONCURRENCE_SAMPLES = 2_000
    BATCH_SIZE = 10_000
    SHOW_PROGRESS = False


def get_config():
    """Obtiene la configuración según el entorno"""
    env = os.environ.get('SIM_ENV', 'development')
    if env == 'production':
        return ProductionConfig()
    if env == 'testing':
        return TestingConfig()
    return DevelopmentConfig()
