from django.apps import AppConfig


class ExpertForgeConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'expert_forge'
    verbose_name = 'Expert construction'
