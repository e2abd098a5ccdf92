def fmt_owner(rec):
    tag = force_text(u'%s:%s' % (rec.user, rec.group))
    return tag
