# mdiqkd/celery.py
import os
from celery import Celery

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'mdiqkd.settings')

app = Celery('mdiqkd')

# CELERY_* keys in settings.py configure the app
app.config_from_object('django.conf:settings', namespace='CELERY')

# Picks up keyrate_app.tasks
app.autodiscover_tasks()

# Each task is a full intensity scan at one distance; workers take one at a time
app.conf.worker_prefetch_multiplier = 1
app.conf.task_acks_late = True
app.conf.result_expires = int(os.getenv('KEYRATE_RESULT_EXPIRES', str(24 * 3600)))
