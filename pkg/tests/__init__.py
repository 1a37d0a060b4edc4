"""Test suite for vacufix."""
