"""Entry point for ``python -m lpmkit``."""

import sys

from lpmkit.cli import main

sys.exit(main())
