"""
Simulated device-under-test pair, sessions and campaigns.
"""
