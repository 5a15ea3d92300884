"""Grid-based walkability index engine."""
