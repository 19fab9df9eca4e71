"""
Django settings for the knockoffforge project.

knockoffforge runs as a set of management commands; there is no web
surface and no database. Process-level knobs are read from the
environment (or a .env file) through python-decouple.
"""

from pathlib import Path

from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only used by Django internals (signing); nothing here is served.
SECRET_KEY = config('SECRET_KEY', default='knockoffforge-local-only')

DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'ddlk',
]

# No database: models are persisted as versioned binary files.
DATABASES = {}

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Knockoff generation

# Upper bound on joblib workers (joint conditionals, per-feature statistics, benchmark seeds)
KNOCKOFF_FORGE_THREADS = config('KNOCKOFF_FORGE_THREADS', default=1, cast=int)

KNOCKOFF_FORGE_DEFAULT_SEED = config('KNOCKOFF_FORGE_DEFAULT_SEED', default=0, cast=int)

# Acceptance-scale experiments take CPU-hours; off unless asked for
KNOCKOFF_FORGE_SLOW_TESTS = config('KNOCKOFF_FORGE_SLOW_TESTS', default=False, cast=bool)

KNOCKOFF_FORGE_LOG_LEVEL = config('KNOCKOFF_FORGE_LOG_LEVEL', default='INFO')


# Logging

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'ddlk': {
            'handlers': ['console'],
            'level': KNOCKOFF_FORGE_LOG_LEVEL,
            'propagate': False,
        },
    },
}
