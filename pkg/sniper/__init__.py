"""
PacketSniper simulation: filters, decode timing and policy execution.
"""
