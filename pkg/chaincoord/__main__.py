import sys

from chaincoord.cli import main

sys.exit(main())
