MAX_ITEMS = 10


def clamp_count(n):
    if n > MAX_ITEMS:
        return MAX_ITEMS
    return n
