"""
Django settings for the msb_lab project.

The project hosts a single app, ``barycenters``, which carries the solver
library, the experiment harness and the ``msb`` management command. There is
no web surface; Django supplies configuration, logging, the run ledger and
the test runner.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

from pathlib import Path
import os

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Not used for anything secret: Django refuses to start without one.
SECRET_KEY = os.getenv('MSB_SECRET_KEY', 'msb-lab-local-only')

DEBUG = os.getenv('MSB_DEBUG', 'False') == 'True'

ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    "barycenters",
]

# Database
# Only the run ledger lives here. Run `python manage.py migrate` once to enable it.
DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": os.getenv('MSB_DB_PATH', BASE_DIR / "db.sqlite3"),
    }
}

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = False
USE_TZ = True

# Solver and oracle configuration
# Dense cost tensors are materialized only up to this many entries
MSB_TENSOR_CAP = int(os.getenv('MSB_TENSOR_CAP', '2000000'))

# Exact LP oracle variable cap (product of support sizes)
MSB_LP_CAP = int(os.getenv('MSB_LP_CAP', '10000'))

# Multi-index enumeration cap for barycenters and coupling expectations
MSB_ENUMERATION_CAP = int(os.getenv('MSB_ENUMERATION_CAP', '2000000'))

MSB_DEFAULT_TOL = float(os.getenv('MSB_DEFAULT_TOL', '1e-9'))
MSB_MAX_SWEEPS = int(os.getenv('MSB_MAX_SWEEPS', '10000'))

# Atoms closer than this in every coordinate are merged
MSB_CONSOLIDATE_TOL = 1e-12

# Rows of marginal 1 per slab in lazy mode. Independent of the thread count.
MSB_SLAB_ROWS = int(os.getenv('MSB_SLAB_ROWS', '64'))

MSB_DEFAULT_THREADS = int(os.getenv('MSB_THREADS', '1'))

# Logging
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': os.getenv('MSB_LOG_LEVEL', 'WARNING'),
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': os.getenv('DJANGO_LOG_LEVEL', 'WARNING'),
            'propagate': False,
        },
        'barycenters': {
            'handlers': ['console'],
            'level': os.getenv('MSB_LOG_LEVEL', 'WARNING'),
            'propagate': False,
        },
    },
}

SITE_NAME = 'MSB Lab'
