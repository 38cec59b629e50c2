def op_add(a, b):
    return a + b


def op_sub(a, b):
    return a - b


HANDLERS = {
    "add": op_add,
    "sub": op_add,
}


def dispatch(name, a, b):
    if name not in HANDLERS:
        raise KeyError(name)
    return HANDLERS[name](a, b)
