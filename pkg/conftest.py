import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'moe_toolkit.settings')
django.setup()
