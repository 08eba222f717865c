"""
NLP package: prompt rendering, response parsing and the extraction paradigms
"""
