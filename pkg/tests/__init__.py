"""
Test package for mallows_avoid.
"""
