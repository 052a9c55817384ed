from django.apps import AppConfig


class CriticHybridConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'critic_hybrid'
    verbose_name = 'Hybrid critics'
