"""Tests module."""

