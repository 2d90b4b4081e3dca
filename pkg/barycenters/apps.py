from django.apps import AppConfig


class BarycentersConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "barycenters"
    verbose_name = "Schrödinger barycenters"
