"""Logging, errors, configuration and file output."""
