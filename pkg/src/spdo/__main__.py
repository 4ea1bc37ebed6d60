import sys

from spdo.cli import main

sys.exit(main())
