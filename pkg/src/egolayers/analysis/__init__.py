"""Tie strength, layering and diffusion analysis."""
