"""Command-line subcommands (prog `sandlab`)."""
