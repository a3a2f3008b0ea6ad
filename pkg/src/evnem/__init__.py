"""Threshold policies for EV charging, flexible demand and storage under NEM time-of-use tariffs."""
