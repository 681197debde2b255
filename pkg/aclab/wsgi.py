"""WSGI entrypoint."""

from .app import create_app
from .config import configure_logging

configure_logging()
app = create_app()
