from django.apps import AppConfig


class FairrankConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'fairrank'
    verbose_name = 'Fair re-ranking toolkit'
