"""
Django settings for fairrank_system project.

The project has no web surface: Django provides the configuration layer,
the management-command CLI, the run registry database and the test runner.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

from pathlib import Path
import os

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

DEBUG = os.environ.get('DEBUG', 'True') == 'True'

# Required by Django even without request handling.
SECRET_KEY = os.environ.get('SECRET_KEY', 'fairrank-offline-toolkit-no-web-surface')

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'fairrank',
]


# Database
# https://docs.djangoproject.com/en/4.2/ref/settings/#databases

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

# Default primary key field type
# https://docs.djangoproject.com/en/4.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Toolkit defaults. Config files and command-line flags override these.
FAIRRANK = {
    'DATA_DIR': Path(os.environ.get('FAIRRANK_DATA_DIR', BASE_DIR / 'data')),
    'RUNS_DIR': Path(os.environ.get('FAIRRANK_RUNS_DIR', BASE_DIR / 'runs')),
    'THREADS': int(os.environ.get('FAIRRANK_THREADS', '1')),
    'SEED': 42,

    # ingest
    'K_CORE': 5,
    'SPLIT': 'temporal-per-user',
    'TRAIN_FRACTION': 0.8,
    'AGE_EDGES': [1, 18, 25, 35, 45, 50, 56],

    # recommenders
    'MODEL': 'wmf',
    'FACTORS': 32,
    'EPOCHS': 50,
    'ALS_SWEEPS': 15,
    'LEARNING_RATE': 0.005,
    'REGULARIZATION': 0.05,
    'CONFIDENCE': 40.0,
    'TOP_N': None,  # None means every unseen item
    'GRID_FACTORS': [16, 32, 64],
    'GRID_REGULARIZATION': [0.01, 0.05, 0.1],

    # fairness
    'K': 20,
    'BETA': 0.5,
    'GAMMA': 0.1,
    'ALPHA': 0.01,
    'SMOOTHING': 1e-6,
    'NORMALIZATION': 'minmax',
    'TIMESTAMP_MODE': 'raw',
    'EXHAUSTIVE_BUDGET': 10 ** 6,

    # harness
    'BETA_GRID': [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
    'GAMMA_GRID': [0.0, 0.1, 0.25, 0.5, 0.75, 1.0],
    'DEFAULT_ATTRIBUTES': {
        'movielens-100k': ['gender', 'age', 'occupation'],
        'movielens-1m': ['gender', 'age', 'occupation'],
        'generic-tsv': ['gender'],
    },
}

# Logging Configuration
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'file': {
            'level': 'ERROR',
            'class': 'logging.FileHandler',
            'filename': BASE_DIR / 'fairrank_errors.log',
            'formatter': 'verbose',
            'delay': True,
        },
        'console': {
            'level': 'DEBUG' if DEBUG else 'INFO',
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'root': {
        'handlers': ['console'],
    },
    'loggers': {
        'django': {
            'handlers': ['file', 'console'],
            'level': 'INFO',
            'propagate': False,
        },
        'fairrank': {
            'handlers': ['file', 'console'],
            'level': os.environ.get('FAIRRANK_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}
