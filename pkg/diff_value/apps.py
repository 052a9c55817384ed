from django.apps import AppConfig


class DiffValueConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'diff_value'
    verbose_name = 'Difference values'
