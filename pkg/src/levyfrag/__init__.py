"""Fragmentation at height of stable Levy trees: simulation and verification."""
