from django.apps import AppConfig


class TrainingConfig(AppConfig):
    name = "seesaw.training"
    verbose_name = "Training"
