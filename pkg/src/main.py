"""Entry point for the funcbayes command line."""

import sys

from funcbayes.cli import main

if __name__ == "__main__":
    sys.exit(main())
