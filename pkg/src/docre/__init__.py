# Makes docre a Python package
