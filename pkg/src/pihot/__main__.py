import sys

from pihot.cli import main

sys.exit(main())
