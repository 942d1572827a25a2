#!/usr/bin/env python3
"""n2rec - Main entry point"""

import signal
import sys

from n2rec.cli.commands import run


def signal_handler(signum, frame):
    """Handle Ctrl+C gracefully"""
    print("\nInterrupted", file=sys.stderr)
    sys.exit(130)


def main():
    """Main application entry point"""
    signal.signal(signal.SIGINT, signal_handler)
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
