from django.apps import AppConfig


class CliConfig(AppConfig):
    name = "seesaw.cli"
    verbose_name = "Command line"
