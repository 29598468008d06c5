"""Nonconvex group-sparse regression by reweighted l1 with screening."""
