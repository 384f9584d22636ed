"""
Model execution and reachability analysis.
"""
