"""Command-line entry point: python -m eye_purify <command> [options]."""

import sys

from eye_purify.cli import main


if __name__ == '__main__':
    sys.exit(main())
