"""
Command line surface: CSV ingestion, command dispatch and result files.
"""
