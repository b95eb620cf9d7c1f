from django.apps import AppConfig


class NnConfig(AppConfig):
    name = "seesaw.nn"
    verbose_name = "Seesaw networks"
