"""
Django settings for mdiqkd project.

The project hosts no web surface; Django supplies settings, logging,
management commands and the Celery integration for the key-rate engine.
"""

from pathlib import Path
import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.getenv('SECRET_KEY', 'mdiqkd-local-only-not-a-secret')

DEBUG = os.getenv('DEBUG', 'False').lower() == 'true'

ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    'rest_framework',
    'keyrate_app',
]

# Nothing is persisted; results go to CSV/YAML files.
DATABASES = {}

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = True
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Serializers only validate experiment files; there are no users or sessions
REST_FRAMEWORK = {
    'UNAUTHENTICATED_USER': None,
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PERMISSION_CLASSES': [],
}

# Key-rate engine
KEYRATE_DEFAULT_JOBS = int(os.getenv('KEYRATE_DEFAULT_JOBS', '1'))
KEYRATE_LP_TOL = float(os.getenv('KEYRATE_LP_TOL', '1e-9'))
# Weak-duality check after every optimal LP solve
KEYRATE_LP_CHECK_DUALITY = os.getenv('KEYRATE_LP_CHECK_DUALITY', str(DEBUG)).lower() == 'true'
KEYRATE_CONFIG_DIR = os.path.join(BASE_DIR, 'configs')

LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
# Per-solve simplex messages are noisy during sweeps
LP_LOG_LEVEL = os.getenv('KEYRATE_LP_LOG_LEVEL', 'WARNING')

# Sweep workers run in separate processes, so records carry the pid
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'sweep': {
            'format': '%(asctime)s %(levelname)s [%(process)d] %(name)s: %(message)s'
        },
        'console': {
            'format': '%(levelname)s %(name)s: %(message)s'
        },
    },
    'handlers': {
        'sweep_log': {
            'level': 'DEBUG',
            'class': 'logging.FileHandler',
            'filename': os.getenv('LOG_FILE', os.path.join(BASE_DIR, 'keyrate_app.log')),
            'formatter': 'sweep',
        },
        'console': {
            'level': 'INFO',
            'class': 'logging.StreamHandler',
            'formatter': 'console',
        },
    },
    'loggers': {
        'keyrate_app': {
            'handlers': ['sweep_log', 'console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
        'keyrate_app.lp_solver': {
            'level': LP_LOG_LEVEL,
        },
        'celery': {
            'handlers': ['console'],
            'level': 'WARNING',
            'propagate': False,
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
}

# Celery Configuration
CELERY_BROKER_URL = os.getenv('CELERY_BROKER_URL', 'redis://localhost:6379/0')
CELERY_RESULT_BACKEND = os.getenv('CELERY_RESULT_BACKEND', 'redis://localhost:6379/0')
CELERY_ACCEPT_CONTENT = ['json']
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_TIMEZONE = 'UTC'
CELERY_TASK_TRACK_STARTED = True
CELERY_TASK_TIME_LIMIT = 30 * 60
CELERY_TASK_ALWAYS_EAGER = os.getenv('CELERY_TASK_ALWAYS_EAGER', 'False').lower() == 'true'
