import sys

from hidden_dpsgd.cli import main

sys.exit(main())
