"""
Configuration utilities for VeriFi.

Defaults can be overridden by ``VERIFI_*`` environment variables (or a .env file).
"""
import os
from dotenv import load_dotenv
from typing import Dict, Any, List, Optional

# Load environment variables from .env file
load_dotenv()

ENV_PREFIX = "VERIFI_"

DEFAULTS: Dict[str, Any] = {
    "seed": 0,
    "budget": 1_000_000,
    "workers": os.cpu_count() or 1,
    "sniffer_loss": 0.0,
    "baseline_loss": None,
    "kmax": 10,
    "k_list": [0, 2, 4, 6, 8, 10],
    "reps": 10,
    "max_events": 10_000,
    "short_packet_threshold": 14,
    "max_header_bytes": 10,
    "jam_success_prob": 1.0,
    "decode_miss_prob": 0.0,
    "log_file": "verifi.log",
    "out": "out",
}


def get_setting(name: str, default: Optional[Any] = None) -> Optional[str]:
    """
    Get a raw setting from the environment.

    Args:
        name: Setting name without prefix (e.g., 'seed', 'budget')

    Returns:
        The environment value if set, otherwise ``default``
    """
    value = os.getenv(f"{ENV_PREFIX}{name.upper()}")
    return value if value is not None else default


def _coerce(raw: str, like: Any) -> Any:
    if isinstance(like, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    if isinstance(like, list):
        return [int(part) for part in raw.split(",") if part.strip()]
    if like is None:
        return float(raw)
    return raw


def get_defaults() -> Dict[str, Any]:
    """
    Get the effective defaults after applying environment overrides.

    Returns:
        A dictionary containing every known setting
    """
    settings = dict(DEFAULTS)
    for name, default in DEFAULTS.items():
        raw = get_setting(name)
        if raw is not None:
            settings[name] = _coerce(raw, default)
    return settings


def parse_k_list(text: str) -> List[int]:
    """Parse a comma separated list of loss budgets such as ``0,2,4``."""
    values = sorted({int(part) for part in text.split(",") if part.strip()})
    if any(v < 0 for v in values):
        raise ValueError("k values must be non-negative")
    return values
