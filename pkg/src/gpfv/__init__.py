"""Finite-volume Gross-Pitaevskii solver on admissible 2D meshes."""
