from base64 import b64encode
from urllib.parse import unquote


def to_bytes(value):
    if isinstance(value, bytes):
        return value
    return value.encode('utf-8')


def auth_header(user, password):
    creds = '%s:%s' % (unquote(user), unquote(password))
    token = b64encode(creds)
    return b'Basic ' + token
