"""Input parsing, network assembly and CSV serialisation."""
