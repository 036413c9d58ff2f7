"""
Application settings and configuration.
"""
import os
import logging
from typing import Dict, Any

# Environment constants
DEV = "development"
STAGING = "staging"
PROD = "production"

# Get environment or default to development
ENV = os.environ.get("APP_ENV", DEV)


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return default
    # accept "1e8" style values as well as plain integers
    return int(float(raw)) if any(c in raw for c in "eE.") else int(raw)


# Base configurations
BASE_CONFIG: Dict[str, Any] = {
    "app_name": "EGS Bounds Verification API",
    "version": "1.0.0",
    "debug": False,
    "sieve_limit": _env_int("EGS_SIEVE_LIMIT", 10**8),
    "threads": _env_int("EGS_THREADS", os.cpu_count() or 1),
    "executor": os.environ.get("EGS_EXECUTOR", "process"),
    "t1_ceiling": _env_int("EGS_T1_CEILING", 10**6),
    "t23_ceiling": _env_int("EGS_T23_CEILING", 10**5),
    "ip_ceiling": _env_int("EGS_IP_CEILING", 2000),
    "ip_node_limit": _env_int("EGS_IP_NODE_LIMIT", 10**6),
    "lp_column_ceiling": _env_int("EGS_LP_COLUMN_CEILING", 2 * 10**6),
    "enclosure_bits": _env_int("EGS_ENCLOSURE_BITS", 128),
    "upper_safety_window": _env_int("EGS_UPPER_WINDOW", 64),
    "small_search_exhaustive": _env_int("EGS_SMALL_EXHAUSTIVE", 2000),
    "log_level": os.environ.get("EGS_LOG_LEVEL", "INFO"),
}

# Environment-specific configurations
ENV_CONFIGS: Dict[str, Dict[str, Any]] = {
    DEV: {
        "debug": True,
    },
    STAGING: {
        "debug": False,
    },
    PROD: {
        "debug": False,
        "executor": os.environ.get("EGS_EXECUTOR", "thread"),
    }
}

# Merge base config with environment-specific config
def get_settings() -> Dict[str, Any]:
    """
    Get application settings based on current environment.

    Returns:
        Dict containing merged configuration settings
    """
    config = BASE_CONFIG.copy()
    config.update(ENV_CONFIGS.get(ENV, {}))
    return config


def configure_logging(level: str = None) -> None:
    """
    Configure the root logger once for the CLI and the HTTP service.

    Args:
        level: Optional level name overriding the configured log_level
    """
    config = get_settings()
    name = (level or config["log_level"]).upper()
    logging.basicConfig(
        level=getattr(logging, name, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )
