import sys

from delaykit.cli import main

sys.exit(main())
