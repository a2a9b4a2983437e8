"""Synthetic populations with planted structure, and brute-force oracles."""
