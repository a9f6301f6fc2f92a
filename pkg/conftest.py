import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'mdiqkd.settings')
django.setup()
