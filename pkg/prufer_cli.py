"""
PruferLab command-line entry point.

Usage:
    python prufer_cli.py decode --n 7 --string 4,3,2,2,7
    python prufer_cli.py enumerate --n 6 --mu 2
    python prufer_cli.py simulate --n 1000 --alpha-grid 0.1:0.9:0.1 --samples 100000 --workers 8
"""

import os
import sys

# Add the repository root to Python path so `src` imports as a package
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.cli import main  # noqa: E402


if __name__ == "__main__":
    main()
