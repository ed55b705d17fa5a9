"""Limiting-subdifferential calculus and robust optimality certificates."""
