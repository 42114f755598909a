"""Homogeneous multigrid for HHO skeletal systems on nested simplicial meshes."""
