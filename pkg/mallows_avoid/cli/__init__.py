"""
Command-line surface: flag models and subcommand handlers.
"""
