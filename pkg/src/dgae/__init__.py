"""Deepened graph auto-encoders for link prediction."""
