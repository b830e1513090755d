import sys

from src.hashkit.dsdh.cli import main

sys.exit(main())
