import sys

from ouconsume.cli import main

sys.exit(main())
