def slugify(title):
    words = [w.lower() for w in title.split() if w]
    return "+".join(words)


def initials(title):
    return "".join(w[0].upper() for w in title.split() if w)
