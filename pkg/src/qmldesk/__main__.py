"""
qmldesk - quantum machine learning on a desk.

Command-line entry point.
"""

import sys


def main(argv: list[str] | None = None) -> int:
    """Main entry point for qmldesk."""
    from qmldesk.cli import run_cli

    return run_cli(argv)


if __name__ == "__main__":
    sys.exit(main())
