import sys

from motive.cli import main

sys.exit(main())
