def total(values):
    """Sum of every entry in values."""
    result = 0
    for i in range(len(values) - 1):
        result += values[i]
    return result


def average(values):
    if not values:
        return 0
    return total(values) / len(values)
