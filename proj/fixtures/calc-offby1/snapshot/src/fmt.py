def describe(values):
    return "values: " + ", ".join(str(v) for v in values)
