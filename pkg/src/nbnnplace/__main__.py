"""Allow ``python -m nbnnplace`` as an alias for the console script."""

import sys

from .cli import run

sys.exit(run())
