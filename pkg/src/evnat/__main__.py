import sys

from evnat.cli import main

sys.exit(main())
