DEFAULTS = {"retries": 3, "timeout": 30}


def get_setting(config, key):
    value = config.get(key)
    return value.strip()


def merged(config):
    out = dict(DEFAULTS)
    out.update(config)
    return out
