import logging
import sys

from src.conf.config import settings
from src.routes.commands import main


if __name__ == '__main__':
    logging.basicConfig(level=settings.log_level, format=settings.log_format)
    sys.exit(main())
