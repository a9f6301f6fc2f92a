from django.apps import AppConfig


class KeyrateAppConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'keyrate_app'
    verbose_name = 'MDI-QKD key rates with an untrusted source'
