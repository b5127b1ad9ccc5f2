"""
Router package initialization.
"""
