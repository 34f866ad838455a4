#!/usr/bin/env python3
"""Command-line launcher for the action_core toolkit."""

import os
import sys

# Ensure local imports resolve when executed from the scripts directory.
sys.path.append(os.path.dirname(__file__))

from action_core.cli import dispatch


if __name__ == "__main__":
    sys.exit(dispatch(sys.argv[1:]))
