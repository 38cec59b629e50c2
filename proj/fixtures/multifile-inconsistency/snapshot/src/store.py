BATCH = 4


def batches(total):
    return (total + BATCH - 1) // BATCH
