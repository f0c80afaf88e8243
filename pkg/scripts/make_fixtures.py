#!/usr/bin/env python3
"""Regenerates the committed fixtures. Run from anywhere:

    python3 scripts/make_fixtures.py
"""
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from fixturegen import write_fixtures  # noqa: E402

if __name__ == "__main__":
    write_fixtures(ROOT)
