"""Support various image file formats
"""
