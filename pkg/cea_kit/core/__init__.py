"""Core module for configuration and shared utilities."""
