"""Gaussian two-sided linear chance constraints."""
