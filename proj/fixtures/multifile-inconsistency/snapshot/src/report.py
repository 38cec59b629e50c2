def report_capacity(used):
    capacity = 12
    free = capacity - used
    return "free slots: " + str(free)
