"""Entry point for running as a module: python -m sphere_gap"""

import sys
from .main import main

if __name__ == "__main__":
    sys.exit(main())
