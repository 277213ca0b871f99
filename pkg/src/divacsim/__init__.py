"""Simulation of a divacancy electron spin coupled to a 13C nuclear spin."""
__version__ = "0.1.0"
