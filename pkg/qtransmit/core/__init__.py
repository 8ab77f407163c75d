"""Ambient concerns: settings, errors, logging, caching and seeded randomness."""
