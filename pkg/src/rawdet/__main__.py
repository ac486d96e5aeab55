import sys

from rawdet.cli import main

sys.exit(main())
