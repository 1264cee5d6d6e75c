import logging
import os
from pathlib import Path
from dotenv import load_dotenv

# Load .env from project root
PROJECT_ROOT = Path(__file__).parent.parent
load_dotenv(PROJECT_ROOT / ".env")


class Settings:
    # Database (experiment run registry)
    DATABASE_URL: str = os.getenv("DATABASE_URL", "sqlite:///./atm_runs.db")

    # Storage paths
    STORAGE_PATH: Path = Path(os.getenv("STORAGE_PATH", "./var/atm"))
    REPORTS_PATH: Path = STORAGE_PATH / "reports"

    # API settings
    API_HOST: str = os.getenv("API_HOST", "0.0.0.0")
    API_PORT: int = int(os.getenv("API_PORT", "8000"))

    # Logging
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")

    # Word problem
    CLASS_LENGTH_CAP: int = int(os.getenv("ATM_CLASS_LENGTH_CAP", "16"))

    # Garside closure
    GARSIDE_CAP: int = int(os.getenv("ATM_GARSIDE_CAP", "5000"))

    # Spectral layer
    TOL: float = float(os.getenv("ATM_TOL", "1e-12"))
    MAX_ITER: int = int(os.getenv("ATM_MAX_ITER", "1000000"))
    VARIANCE_CROSS_CHECK: float = 1e-6   # relative gap between the two σ² methods
    DEGENERACY_TOL: float = 1e-10        # σ² at or below this is reported degenerate
    MOBIUS_TOL: float = 1e-10            # h(e) = 0 test for float valuations

    # Sampling
    EXACT_MAX_LENGTH: int = int(os.getenv("ATM_EXACT_MAX_LENGTH", "500"))
    SEED: int = int(os.getenv("ATM_SEED", "20240101"))
    THREADS: int = int(os.getenv("ATM_THREADS", "0"))  # 0 = os.cpu_count()

    def worker_count(self, threads: int | None = None) -> int:
        """Resolve a thread-count flag (0 or None means available parallelism)."""
        value = self.THREADS if threads is None else threads
        return value if value > 0 else (os.cpu_count() or 1)


settings = Settings()


def configure_logging(level: str | None = None) -> None:
    """Install the single stderr handler used by the CLI and the API."""
    logging.basicConfig(
        level=(level or settings.LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )
