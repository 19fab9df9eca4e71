from django.apps import AppConfig


class DdlkConfig(AppConfig):
    name = 'ddlk'
    verbose_name = 'Deep direct likelihood knockoffs'
