"""
Settings accessors for the solver library.

Each accessor reads the project setting and falls back to the built-in
default, so the library also works without a configured Django project.
"""

from django.conf import settings

DEFAULTS = {
    'MSB_TENSOR_CAP': 2_000_000,
    'MSB_LP_CAP': 10_000,
    'MSB_ENUMERATION_CAP': 2_000_000,
    'MSB_DEFAULT_TOL': 1e-9,
    'MSB_MAX_SWEEPS': 10_000,
    'MSB_CONSOLIDATE_TOL': 1e-12,
    'MSB_SLAB_ROWS': 64,
    'MSB_DEFAULT_THREADS': 1,
}


def get_setting(name):
    """
    Get a solver setting from the project settings.

    Args:
        name: Setting name, one of the keys of DEFAULTS

    Returns:
        The configured value, or the default when unset or unconfigured
    """
    if not settings.configured:
        return DEFAULTS[name]
    return getattr(settings, name, DEFAULTS[name])


def get_tensor_cap() -> int:
    return int(get_setting('MSB_TENSOR_CAP'))


def get_lp_cap() -> int:
    return int(get_setting('MSB_LP_CAP'))


def get_enumeration_cap() -> int:
    return int(get_setting('MSB_ENUMERATION_CAP'))


def get_default_tol() -> float:
    return float(get_setting('MSB_DEFAULT_TOL'))


def get_max_sweeps() -> int:
    return int(get_setting('MSB_MAX_SWEEPS'))


def get_consolidate_tol() -> float:
    return float(get_setting('MSB_CONSOLIDATE_TOL'))


def get_slab_rows() -> int:
    return int(get_setting('MSB_SLAB_ROWS'))


def get_default_threads() -> int:
    return int(get_setting('MSB_DEFAULT_THREADS'))
