#!/usr/bin/env python3
"""
This module allows running the ccb package as a script:
python -m ccb [arguments]
"""

from .ccb import main

if __name__ == "__main__":
    main()
