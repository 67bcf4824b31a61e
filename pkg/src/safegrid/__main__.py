from safegrid.cli import main
import sys

sys.exit(main())
