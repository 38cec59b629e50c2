def render_table(rows):
    width = max(len(str(r)) for r in rows)
    return "\n".join(str(r).ljust(width) for r in rows)


def render_csv(rows):
    return ",".join(str(r) for r in rows)
