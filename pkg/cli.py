"""CLI entry point for stablelab - re-exports from stablelab.cli.

This file allows direct execution:
    python cli.py --help

The actual implementation is in stablelab/cli.py
"""

from stablelab.cli import main

if __name__ == "__main__":
    main()
