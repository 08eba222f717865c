"""
Monitoring package: structured logging, error counters and call metrics
"""
