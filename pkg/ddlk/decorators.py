import logging
from functools import wraps

from django.core.management.base import CommandError

from .exceptions import InvalidInput, NumericalAbort

logger = logging.getLogger(__name__)

INPUT_ERROR = 2
NUMERICAL_ABORT = 3


def command_errors(handle):
    """Decorator turning domain errors raised by a command's handle() into exit codes"""
    @wraps(handle)
    def wrapper(self, *args, **options):
        try:
            return handle(self, *args, **options)
        except InvalidInput as exc:
            raise CommandError(str(exc), returncode=INPUT_ERROR)
        except NumericalAbort as exc:
            logger.error('numerical abort: %s', exc)
            raise CommandError(str(exc), returncode=NUMERICAL_ABORT)
    return wrapper
