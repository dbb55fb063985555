"""Configuration management for the induction engine."""
import os
import logging
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Config:
    """Engine configuration class."""

    # Evaluation budgets (steps: one per scheme dispatch plus one per oracle call)
    INDUCT_BUDGET = int(os.getenv('INDUCT_BUDGET', 20000))
    INDUCT_COMPARE_BUDGET = int(os.getenv('INDUCT_COMPARE_BUDGET', 200000))

    # Sweeps
    INDUCT_SEED = int(os.getenv('INDUCT_SEED', 0))
    INDUCT_WORKERS = int(os.getenv('INDUCT_WORKERS', 4))
    INDUCT_MAX_EXHAUSTIVE_N = int(os.getenv('INDUCT_MAX_EXHAUSTIVE_N', 8))

    # Deep S9 chains recurse once per dispatch
    INDUCT_RECURSION_LIMIT = int(os.getenv('INDUCT_RECURSION_LIMIT', 50000))

    # Block level at which a truncated calculation is reported as divergent
    INDUCT_DIVERGENCE_LEVEL = int(os.getenv('INDUCT_DIVERGENCE_LEVEL', 6))

    INDUCT_LOG_LEVEL = os.getenv('INDUCT_LOG_LEVEL', 'WARNING')

    @property
    def LOG_LEVEL(self):
        """Resolve the configured level name to a logging constant."""
        return getattr(logging, self.INDUCT_LOG_LEVEL.upper(), logging.WARNING)

    @staticmethod
    def init_logging(level=None):
        """Configure the root logger once for scripts and the CLI."""
        logging.basicConfig(
            level=level if level is not None else config.LOG_LEVEL,
            format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        )


config = Config()
