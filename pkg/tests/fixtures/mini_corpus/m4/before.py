def fmt_owner(rec):
    tag = u'%s:%s' % (rec.user, rec.group)
    return tag
