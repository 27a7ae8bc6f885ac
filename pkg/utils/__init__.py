"""
Helpers shared by the library and the command line: exceptions, logging,
validation, timing and the worker pool.
"""
