import sys
from agendamech.cli import main
sys.exit(main())
