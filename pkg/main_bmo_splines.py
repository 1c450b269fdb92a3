"""
Main entry point for the BMO spline toolkit.

This script runs the command-line front end.
"""

import sys

from integrations.cli import main

if __name__ == "__main__":
    sys.exit(main())
