"""Entry point for `python -m rocketmintime`."""

from rocketmintime.cli import main

raise SystemExit(main())
