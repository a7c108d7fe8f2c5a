from django.apps import AppConfig


class HeraldConfig(AppConfig):
    """
    Application configuration for the herald simulator app.

    The app ships no models; it provides the simulation library and the
    ``simulate`` management command.
    """

    default_auto_field = "django.db.models.BigAutoField"
    name = "herald"
