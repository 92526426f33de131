import logging

from django.db.models.signals import post_save
from django.dispatch import receiver

from .models import ExperimentRun

logger = logging.getLogger(__name__)


@receiver(post_save, sender=ExperimentRun)
def log_saved_run(sender, instance, created, **kwargs):
    if not created:
        return
    logger.info("Stored run %s for config %s", instance.pk, instance.config_hash)
