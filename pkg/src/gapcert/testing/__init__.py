"""Test doubles shipped with the package."""
