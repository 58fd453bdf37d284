"""Spiral anchoring laboratory."""
