from decouple import config


class Settings:
    # Integrator Configuration
    INTEGRATOR_RTOL: float = config("INTEGRATOR_RTOL", default=1e-10, cast=float)
    INTEGRATOR_ATOL: float = config("INTEGRATOR_ATOL", default=1e-12, cast=float)
    INTEGRATOR_METHOD: str = config("INTEGRATOR_METHOD", default="DOP853")
    COCYCLE_TOL: float = config("COCYCLE_TOL", default=1e-6, cast=float)
    LATTICE_STEP: float = config("LATTICE_STEP", default=0.25, cast=float)

    # Working Window
    WINDOW_MIN: float = config("WINDOW_MIN", default=-20.0, cast=float)
    WINDOW_MAX: float = config("WINDOW_MAX", default=20.0, cast=float)
    T_BIG: float = config("T_BIG", default=20.0, cast=float)

    # Verification Tolerances
    MARGIN_TOL: float = config("MARGIN_TOL", default=1e-9, cast=float)
    PROJECTION_TOL: float = config("PROJECTION_TOL", default=1e-8, cast=float)
    LIP_SLACK: float = config("LIP_SLACK", default=1e-6, cast=float)
    ADMISSIBLE_SAMPLES: int = config("ADMISSIBLE_SAMPLES", default=2000, cast=int)
    ADMISSIBLE_RADIUS: float = config("ADMISSIBLE_RADIUS", default=10.0, cast=float)

    # Lyapunov Configuration
    QUAD_TOL: float = config("QUAD_TOL", default=1e-8, cast=float)
    T_CUT: float = config("T_CUT", default=40.0, cast=float)
    T_SUP: float = config("T_SUP", default=30.0, cast=float)
    SUP_TOL: float = config("SUP_TOL", default=1e-8, cast=float)

    # Lyapunov-Perron Configuration
    LP_STEP: float = config("LP_STEP", default=0.02, cast=float)
    FP_TOL: float = config("FP_TOL", default=1e-10, cast=float)
    FP_MAX_ITER: int = config("FP_MAX_ITER", default=80, cast=int)
    T_H_CAP: float = config("T_H_CAP", default=40.0, cast=float)
    INVARIANCE_FLOOR: float = config("INVARIANCE_FLOOR", default=1e-7, cast=float)

    # Conjugacy Configuration
    ROOT_TOL: float = config("ROOT_TOL", default=1e-10, cast=float)
    BRACKET_CAP: float = config("BRACKET_CAP", default=2.0 ** 20, cast=float)
    E2E_TOL: float = config("E2E_TOL", default=1e-4, cast=float)

    # Reports
    REPORT_SCHEMA_VERSION: str = config("REPORT_SCHEMA_VERSION", default="1.0")
    OUTPUT_DIR: str = config("OUTPUT_DIR", default="out")
    DEFAULT_SEED: int = config("DEFAULT_SEED", default=20240601, cast=int)

    # Logging
    LOG_LEVEL: str = config("LOG_LEVEL", default="INFO")


settings = Settings()
