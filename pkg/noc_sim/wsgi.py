import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "noc_sim.settings.prod")

application = get_wsgi_application()
