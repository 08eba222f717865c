# Makes cache a Python package
