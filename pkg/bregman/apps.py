""" Configuration for the Bregman Arimoto-Blahut application """
from django.apps import AppConfig


class BregmanConfig(AppConfig):
    """Configuration for the Bregman Arimoto-Blahut application. It has no models"""

    name = "bregman"
    verbose_name = "Bregman Arimoto-Blahut solvers"
