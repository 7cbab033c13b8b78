import logging

# Get the root logger for this package
logger = logging.getLogger(__name__)

__version__ = "0.3.0"

logger.debug("nonlocal_constants package initialized.")
