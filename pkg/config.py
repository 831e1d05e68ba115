from os import path, environ

basedir = path.abspath(path.dirname(__file__))


class Config:
    LOG_LEVEL = environ.get("NEMATIC_LOG_LEVEL") or "INFO"
    OUTPUT_DIR = environ.get("NEMATIC_OUTPUT_DIR") or path.join(basedir, "instance", "runs")

    RADIAL_GRID_POINTS = int(environ.get("RADIAL_GRID_POINTS") or 2000)
    RADIAL_GRADIENT_TOL = float(environ.get("RADIAL_GRADIENT_TOL") or 1e-8)
    RADIAL_MAX_ITER = int(environ.get("RADIAL_MAX_ITER") or 200)

    FIELD_TARGET_H_FRACTION = float(environ.get("FIELD_TARGET_H_FRACTION") or 1 / 60)
    FIELD_GRADIENT_TOL = float(environ.get("FIELD_GRADIENT_TOL") or 1e-6)
    FIELD_MAX_ITER = int(environ.get("FIELD_MAX_ITER") or 20000)
    FIELD_OPTIMIZER = environ.get("FIELD_OPTIMIZER") or "lbfgs"
    MAX_MESH_NODES = int(environ.get("MAX_MESH_NODES") or 2_000_000)

    SYMMETRY_TOL_FACTOR = float(environ.get("SYMMETRY_TOL_FACTOR") or 1e-3)
    VERTICAL_TOL_FACTOR = float(environ.get("VERTICAL_TOL_FACTOR") or 1e-3)
    BETA_TOL = float(environ.get("BETA_TOL") or 0.05)
    DEGENERATE_TIE = float(environ.get("DEGENERATE_TIE") or 1e-6)

    M_LOWER_BOUND = float(environ.get("M_LOWER_BOUND") or -0.75)
    PD_THRESHOLD = float(environ.get("PD_THRESHOLD") or 1e-10)
    MODE_QUADRATURE = int(environ.get("MODE_QUADRATURE") or 64)
    SWEEP_WORKERS = int(environ.get("SWEEP_WORKERS") or 1)


class DevelopmentConfig(Config):
    LOG_LEVEL = environ.get("NEMATIC_LOG_LEVEL") or "DEBUG"


class TestingConfig(Config):
    OUTPUT_DIR = environ.get("TEST_OUTPUT_DIR") or path.join(basedir, "instance", "test-runs")
    RADIAL_GRID_POINTS = 400
    FIELD_TARGET_H_FRACTION = 1 / 20
    FIELD_MAX_ITER = 5000


class ProductionConfig(Config):
    LOG_LEVEL = environ.get("NEMATIC_LOG_LEVEL") or "WARNING"
    SWEEP_WORKERS = int(environ.get("SWEEP_WORKERS") or 4)
