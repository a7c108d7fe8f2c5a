# heraldsim/settings.py
from pathlib import Path
import os
from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Load environment variables from .env file
load_dotenv()

SECRET_KEY = os.getenv("SECRET_KEY", "heraldsim-local-only")

DEBUG = os.getenv("DEBUG", "False").lower() == "true"

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "django.contrib.contenttypes",
    "rest_framework",
    "herald",
]

# Nothing is persisted; the database entry only satisfies the test runner.
DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": BASE_DIR / "db.sqlite3",
    }
}


# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

REST_FRAMEWORK = {
    "DEFAULT_RENDERER_CLASSES": [
        "rest_framework.renderers.JSONRenderer",
    ],
    "COERCE_DECIMAL_TO_STRING": False,
}

# -------------------------------------------------------------
# LOGGING
# -------------------------------------------------------------

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "standard": {
            "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stderr",
            "formatter": "standard",
        },
    },
    "loggers": {
        "herald": {
            "handlers": ["console"],
            "level": os.getenv("HERALD_SIM_LOG_LEVEL", "WARNING").upper(),
            "propagate": False,
        },
    },
}

# -------------------------------------------------------------
# SIMULATOR CONFIGURATION
# -------------------------------------------------------------

HERALD_SIM = {
    "PRUNE_THRESHOLD": float(os.getenv("HERALD_SIM_PRUNE_THRESHOLD", "1e-14")),
    "OCCUPATION_CAP": 64,
    "EXPANSION_BUDGET": 200_000,
    "MAX_ORDER": 9,
    "ORACLE_BUDGET": 60_000,
    "THREADS": int(os.getenv("HERALD_SIM_THREADS", "1")),
    "DEFAULT_TAU_RANGE": (0.01, 0.1),
    "FLOAT_DIGITS": 15,
    "SCHEMA_VERSION": "heraldsim/1",
}
