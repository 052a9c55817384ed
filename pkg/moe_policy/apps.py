from django.apps import AppConfig


class MoePolicyConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'moe_policy'
    verbose_name = 'Mixture policies'
