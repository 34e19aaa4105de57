"""Topological-sector optimization lab."""
