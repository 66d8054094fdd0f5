"""Roll / Hermit-frequency mixer blocks and model assembly."""
