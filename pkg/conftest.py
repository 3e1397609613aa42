""" Configures Django for the test suite when it is run with pytest """
import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "abproject.settings")
django.setup()
