"""
Access to the ``HERALD_SIM`` settings dict with built-in defaults.
"""

from django.conf import settings

DEFAULTS = {
    "PRUNE_THRESHOLD": 1e-14,
    "OCCUPATION_CAP": 64,
    "EXPANSION_BUDGET": 200_000,
    "MAX_ORDER": 9,
    "ORACLE_BUDGET": 60_000,
    "THREADS": 1,
    "DEFAULT_TAU_RANGE": (0.01, 0.1),
    "FLOAT_DIGITS": 15,
    "SCHEMA_VERSION": "heraldsim/1",
}


def get_setting(name):
    """Returns ``HERALD_SIM[name]``, falling back to the module defaults."""
    if name not in DEFAULTS:
        raise KeyError(f"Unknown simulator setting: {name}")
    overrides = getattr(settings, "HERALD_SIM", {}) if settings.configured else {}
    return overrides.get(name, DEFAULTS[name])
