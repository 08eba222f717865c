import sys

from src.docre.cli import main

sys.exit(main())
