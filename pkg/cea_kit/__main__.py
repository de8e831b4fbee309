import sys

from cea_kit.cli import main

sys.exit(main())
