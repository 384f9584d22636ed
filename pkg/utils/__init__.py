"""
Utility functions for the VeriFi workbench.
"""
