"""Hepatitis B within-host dynamics with capsid recycling."""
