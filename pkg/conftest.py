"""Pytest wiring for the Django test suite (mirrors `manage.py test` setup)."""
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'cnnsim_project.settings')
django.setup()

import pytest  # noqa: E402
from django.test.utils import setup_test_environment, teardown_test_environment  # noqa: E402
from django.test.runner import DiscoverRunner  # noqa: E402


@pytest.fixture(scope='session', autouse=True)
def _django_test_environment():
    setup_test_environment()
    runner = DiscoverRunner(verbosity=0, interactive=False)
    old_config = runner.setup_databases()
    try:
        yield
    finally:
        runner.teardown_databases(old_config)
        teardown_test_environment()
