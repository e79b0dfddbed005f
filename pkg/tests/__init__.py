"""Test suite for the phi operator-iteration toolkit."""
