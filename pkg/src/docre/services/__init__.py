"""
Services package: ontology and corpus loading, corpus runs, evaluation, tuning data
"""
