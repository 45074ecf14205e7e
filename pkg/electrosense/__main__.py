"""Allow ``python -m electrosense``."""

from __future__ import annotations

import sys

from electrosense.cli import main

if __name__ == "__main__":
    sys.exit(main())
