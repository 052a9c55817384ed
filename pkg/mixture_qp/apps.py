from django.apps import AppConfig


class MixtureQpConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'mixture_qp'
    verbose_name = 'Mixture QP'
