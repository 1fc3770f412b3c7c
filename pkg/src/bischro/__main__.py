import sys

from bischro.cli import main

sys.exit(main())
