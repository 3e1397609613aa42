"""
Django settings for abproject project.

Settings are read from the environment, or from a .env file next to
manage.py when one exists. Everything has a default so the management
commands and the test suite run without any configuration.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

import os

import environ

env = environ.Env(
    # set casting, default value
    DEBUG=(bool, False),
    LOG_LEVEL=(str, "INFO"),
    BREGMAN_NEWTON_TOLERANCE=(float, 1e-12),
    BREGMAN_NEWTON_MAX_ITERATIONS=(int, 200),
    BREGMAN_DEFAULT_GAMMA=(float, 50.0),
    BREGMAN_DEFAULT_EPSILON=(float, 1e-4),
)

# Set the project base directory
BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

if os.path.exists(os.path.join(BASE_DIR, ".env")):
    environ.Env.read_env(os.path.join(BASE_DIR, ".env"))

# False if not in os.environ because of casting above
DEBUG = env("DEBUG")

# Only Django itself needs a key; nothing here signs data
SECRET_KEY = env("SECRET_KEY", default="insecure-development-key-for-bregman-commands")

# Inner Newton solves (projection, Legendre inversion, mirror steps, em m-steps)
BREGMAN_NEWTON_TOLERANCE = env("BREGMAN_NEWTON_TOLERANCE")
BREGMAN_NEWTON_MAX_ITERATIONS = env("BREGMAN_NEWTON_MAX_ITERATIONS")

# Defaults of the solve and compare commands
BREGMAN_DEFAULT_GAMMA = env("BREGMAN_DEFAULT_GAMMA")
BREGMAN_DEFAULT_EPSILON = env("BREGMAN_DEFAULT_EPSILON")

REST_FRAMEWORK = {
    # Serializers only validate files; there are no requests or users
    "DEFAULT_PERMISSION_CLASSES": [],
    "UNAUTHENTICATED_USER": None,
}

# Application definition

INSTALLED_APPS = [
    "django.contrib.contenttypes",
    "django.contrib.auth",
    "rest_framework",
    "bregman",
]

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "loggers": {
        "bregman": {
            "handlers": ["console"],
            "level": env("LOG_LEVEL"),
            "propagate": False,
        },
    },
}


# Internationalization
# https://docs.djangoproject.com/en/4.2/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = True

USE_TZ = True
