"""Harness commands behind the CLI."""
