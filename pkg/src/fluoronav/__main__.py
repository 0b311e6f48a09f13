"""Package entry point for python -m fluoronav."""
import sys

from .cli import main

sys.exit(main())
