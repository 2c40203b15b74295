"""Allow ``python -m cvconf`` to reach the command-line interface."""

from .cli_harness import main

raise SystemExit(main())
