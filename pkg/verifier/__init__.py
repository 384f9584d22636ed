"""
Sniffer-trace verification under bounded sniffer loss.
"""
