"""Electromagnetic conductivity upscaling on nested tensor meshes."""
__version__ = "0.1.0"
