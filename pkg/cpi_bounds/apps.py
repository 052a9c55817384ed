from django.apps import AppConfig


class CpiBoundsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'cpi_bounds'
    verbose_name = 'CPI bounds'
