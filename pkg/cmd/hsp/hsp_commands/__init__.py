"""hsp CLI entry points."""
