import logging

from django.conf import settings
from django.test import SimpleTestCase


class SettingsTest(SimpleTestCase):

    def test_only_the_engine_apps_are_installed(self):
        self.assertEqual(settings.INSTALLED_APPS, ['rest_framework', 'keyrate_app'])
        self.assertEqual(settings.REST_FRAMEWORK['DEFAULT_AUTHENTICATION_CLASSES'], [])

    def test_logging_targets_the_engine(self):
        loggers = settings.LOGGING['loggers']
        self.assertEqual(loggers['keyrate_app']['handlers'], ['sweep_log', 'console'])
        self.assertFalse(loggers['keyrate_app']['propagate'])
        self.assertIn('keyrate_app.lp_solver', loggers)
        self.assertEqual(settings.LOGGING['handlers']['sweep_log']['formatter'], 'sweep')
        self.assertFalse(logging.getLogger('keyrate_app').propagate)
