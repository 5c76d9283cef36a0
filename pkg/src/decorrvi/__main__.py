from __future__ import annotations

import sys

from decorrvi.cli import main

sys.exit(main())
