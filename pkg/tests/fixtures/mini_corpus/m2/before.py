def fmt_pair(user, pwd):
    shown = u'%s:%s' % (user, pwd)
    return shown
