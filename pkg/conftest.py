"""Configure Django before pytest collects the ddlk test modules."""
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'knockoffforge.settings')
django.setup()
