from django.apps import AppConfig


class ManagerRlConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'manager_rl'
    verbose_name = 'Dialogue manager RL'
