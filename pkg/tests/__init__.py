"""Test suite for handdigit."""
