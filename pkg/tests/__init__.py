"""
Tests package initialization.
""" 