"""
Django settings for the moe_toolkit project.
"""

from pathlib import Path
import os
from dotenv import load_dotenv

load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.environ.get('SECRET_KEY', 'django-insecure-moe-toolkit-local-key')

DEBUG = os.environ.get('DEBUG', 'True').lower() == 'true'

ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'rest_framework',
    'mdp_core',
    'moe_policy',
    'diff_value',
    'cpi_bounds',
    'mixture_qp',
    'critic_hybrid',
    'manager_rl',
    'expert_forge',
    'harness',
]

# Everything is computed in memory; experiments write CSV/JSON files.
DATABASES = {}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Toolkit defaults (numeric modules take the same values as keyword defaults)
MOE_TOOLKIT = {
    'OUTPUT_DIR': Path(os.environ.get('MOE_OUTPUT_DIR', BASE_DIR / 'runs')),
    'SUPPORT_FLOOR': float(os.environ.get('MOE_SUPPORT_FLOOR', '1e-6')),
    'PSD_TOL': float(os.environ.get('MOE_PSD_TOL', '1e-9')),
    'KKT_TOL': float(os.environ.get('MOE_KKT_TOL', '1e-8')),
    'KKT_MAX_ITER': int(os.environ.get('MOE_KKT_MAX_ITER', '1000')),
    'ORACLE_STATE_CAP': int(os.environ.get('MOE_ORACLE_STATE_CAP', '100000')),
    'EPISODE_HORIZON': int(os.environ.get('MOE_EPISODE_HORIZON', '5')),
}

MOE_LOG_LEVEL = os.environ.get('MOE_LOG_LEVEL', 'INFO').upper()

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
        app: {
            'handlers': ['console'],
            'level': MOE_LOG_LEVEL,
            'propagate': False,
        }
        for app in [
            'mdp_core',
            'moe_policy',
            'diff_value',
            'cpi_bounds',
            'mixture_qp',
            'critic_hybrid',
            'manager_rl',
            'expert_forge',
            'harness',
        ]
    },
}
